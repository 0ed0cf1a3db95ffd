//! Binary layout shared by operators, spinor blocks and phase-space fields.
//!
//! ```text
//! offset  size  field
//! 0       8     magic  b"SPINQE\x01\0"
//! 8       1     endianness tag, b'L' (little endian)
//! 9       3     reserved, zero
//! 12      4     u32  d
//! 16      4     u32  N (points per axis)
//! 20      8     f64  L (half-width)
//! 28      8     f64  hbar
//! 36      4     u32  rank r
//! 40      8·r   u64  shape, slowest axis first
//! ...           zero padding to a multiple of 16 bytes
//! data          row-major complex entries, each (re: f64, im: f64)
//! ```
//!
//! Every file is accompanied by `<file>.json`, an NPY-style manifest with
//! `descr = "<c16"`, `fortran_order = false`, `shape` and the data `offset`,
//! so that `numpy.memmap(path, dtype="<c16", offset=..., shape=...)` reads it.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat2::C64;
use crate::weyl::GridSpec;

pub const MAGIC: [u8; 8] = *b"SPINQE\x01\0";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockManifest {
    pub descr: String,
    pub fortran_order: bool,
    pub shape: Vec<u64>,
    pub offset: u64,
    pub kind: String,
    pub dim: u32,
    pub points_per_axis: u32,
    pub half_width: f64,
    pub hbar: f64,
}

fn header_len(rank: usize) -> usize {
    (40 + 8 * rank).div_ceil(16) * 16
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes a complex block and its manifest.
pub fn write_block<I>(path: &Path, kind: &str, grid: &GridSpec, shape: &[u64], data: I) -> Result<BlockManifest>
where
    I: IntoIterator<Item = C64>,
{
    let total: u64 = shape.iter().product();
    let hl = header_len(shape.len());
    let mut w = BufWriter::new(File::create(path)?);
    let mut head = Vec::with_capacity(hl);
    head.extend_from_slice(&MAGIC);
    head.push(b'L');
    head.extend_from_slice(&[0u8; 3]);
    head.extend_from_slice(&(grid.dim as u32).to_le_bytes());
    head.extend_from_slice(&(grid.n as u32).to_le_bytes());
    head.extend_from_slice(&grid.half_width.to_le_bytes());
    head.extend_from_slice(&grid.hbar.to_le_bytes());
    head.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for s in shape {
        head.extend_from_slice(&s.to_le_bytes());
    }
    head.resize(hl, 0);
    w.write_all(&head)?;
    let mut count = 0u64;
    for v in data {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
        count += 1;
    }
    if count != total {
        return Err(Error::contract(format!("block shape {shape:?} expects {total} entries, got {count}")));
    }
    w.flush()?;
    let manifest = BlockManifest {
        descr: "<c16".into(),
        fortran_order: false,
        shape: shape.to_vec(),
        offset: hl as u64,
        kind: kind.into(),
        dim: grid.dim as u32,
        points_per_axis: grid.n as u32,
        half_width: grid.half_width,
        hbar: grid.hbar,
    };
    std::fs::write(manifest_path(path), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Reads a block back as `(grid, shape, entries)`.
pub fn read_block(path: &Path) -> Result<(GridSpec, Vec<u64>, Vec<C64>)> {
    let mut buf = Vec::new();
    File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() < 40 || buf[..8] != MAGIC || buf[8] != b'L' {
        return Err(Error::contract(format!("{} is not a block file", path.display())));
    }
    let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
    let grid = GridSpec::new(u32_at(12) as usize, f64_at(20), u32_at(16) as usize, f64_at(28))?;
    let rank = u32_at(36) as usize;
    let hl = header_len(rank);
    let shape: Vec<u64> = (0..rank)
        .map(|k| u64::from_le_bytes(buf[40 + 8 * k..48 + 8 * k].try_into().unwrap()))
        .collect();
    let total = shape.iter().product::<u64>() as usize;
    if buf.len() != hl + 16 * total {
        return Err(Error::contract("block file length does not match its shape"));
    }
    let data = (0..total)
        .map(|k| {
            let o = hl + 16 * k;
            C64::new(f64_at(o), f64_at(o + 8))
        })
        .collect();
    Ok((grid, shape, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.bin");
        let grid = GridSpec::new(1, 3.0, 8, 0.1).unwrap();
        let data: Vec<C64> = (0..6).map(|k| C64::new(k as f64, -0.5 * k as f64)).collect();
        let m = write_block(&path, "test", &grid, &[2, 3], data.clone()).unwrap();
        assert_eq!(m.offset % 16, 0);
        let (g, shape, back) = read_block(&path).unwrap();
        assert_eq!(g, grid);
        assert_eq!(shape, vec![2, 3]);
        assert_eq!(back, data);
        let text = std::fs::read_to_string(manifest_path(&path)).unwrap();
        assert!(text.contains("\"descr\": \"<c16\""));
        assert!(write_block(&path, "test", &grid, &[4], data).is_err());
    }
}
