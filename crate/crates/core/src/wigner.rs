//! Matrix-valued Wigner and Husimi transforms of spinor grid vectors.
//!
//! Fields live on the product of the dual momentum grid (`N` nodes per axis)
//! and the half-step position grid `c_s = −L + (s + 1)·dx/2`, `s = 0..2N−2`.
//! Storage is row-major over `(s_1..s_d, j_1..j_d)`, position first. With
//! cell weight `Δp^d (dx/2)^d / (2πħ)^d` the pairing
//! `Σ tr(W·B)·cell = ⟨ψ, Op(B) ψ⟩` is an identity for the quantization in
//! [`crate::weyl`]: no periodic wrap is applied in the lag variable.
//!
//! The lag sum runs with step `2·dx`, so the Wigner field is alias-free only
//! for `|p| ≤ p_max/2`; beyond that it carries images that alternate in sign
//! between neighbouring position nodes and cancel against smooth symbols and
//! under Gaussian smoothing.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::mat2::{Mat2, PauliAxis, C64};
use crate::phase_flow::HamiltonianModel;
use crate::skew_product::{sample_liouville, ShellSampler};
use crate::symbol::MatrixSymbol;
use crate::weyl::{fft_nd, GridSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Wigner,
    Husimi,
}

#[derive(Clone, Debug)]
pub struct MatrixPhaseField {
    grid: GridSpec,
    kind: FieldKind,
    values: Vec<Mat2>,
    /// `Σ tr W · cell`.
    normalization: f64,
}

impl MatrixPhaseField {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn values(&self) -> &[Mat2] {
        &self.values
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// Nodes per position axis, `2N − 1`.
    pub fn x_nodes(&self) -> usize {
        2 * self.grid.n - 1
    }

    pub fn p_sites(&self) -> usize {
        self.grid.sites()
    }

    pub fn x_sites(&self) -> usize {
        self.x_nodes().pow(self.grid.dim as u32)
    }

    /// Quadrature weight per node including `(2πħ)^{−d}`.
    pub fn cell(&self) -> f64 {
        cell_weight(&self.grid)
    }

    pub fn at(&self, s: usize, j: usize) -> &Mat2 {
        &self.values[s * self.p_sites() + j]
    }

    /// `(p, x)` of node `(s, j)`.
    pub fn coordinates(&self, s: usize, j: usize) -> (Vec<f64>, Vec<f64>) {
        let g = &self.grid;
        let d = g.dim;
        let xn = self.x_nodes();
        let mut p = vec![0.0; d];
        let mut x = vec![0.0; d];
        let (mut rs, mut rj) = (s, j);
        for k in (0..d).rev() {
            x[k] = g.mid_at(rs % xn);
            rs /= xn;
            p[k] = g.p_at(rj % g.n);
            rj /= g.n;
        }
        (p, x)
    }

    /// `Σ_nodes f(p, x, W) · cell`.
    fn integrate<F>(&self, f: F) -> Result<C64>
    where
        F: Fn(&[f64], &[f64], &Mat2) -> Result<C64> + Sync,
    {
        let ps = self.p_sites();
        let sum: Result<C64> = (0..self.x_sites())
            .into_par_iter()
            .map(|s| {
                let mut acc = C64::new(0.0, 0.0);
                for j in 0..ps {
                    let (p, x) = self.coordinates(s, j);
                    acc += f(&p, &x, self.at(s, j))?;
                }
                Ok(acc)
            })
            .try_reduce(|| C64::new(0.0, 0.0), |a, b| Ok(a + b));
        Ok(sum? * self.cell())
    }

    /// Smallest eigenvalue of the hermitian part over all nodes.
    pub fn min_eigenvalue(&self) -> f64 {
        self.values
            .par_iter()
            .map(|m| {
                let h = (*m + m.adjoint()).scale_re(0.5);
                h.hermitian_eigenvalues()[0]
            })
            .reduce(|| f64::INFINITY, f64::min)
    }

    /// `max ‖W − W†‖_F` over nodes.
    pub fn max_hermiticity_defect(&self) -> f64 {
        self.values.iter().map(|m| (*m - m.adjoint()).frobenius()).fold(0.0, f64::max)
    }

    /// `∫ W dp/(2πħ)^d` at position node `s`.
    pub fn marginal(&self, s: usize) -> Mat2 {
        let ps = self.p_sites();
        let w = self.grid.dp().powi(self.grid.dim as i32) / (2.0 * std::f64::consts::PI * self.grid.hbar).powi(self.grid.dim as i32);
        (0..ps).map(|j| *self.at(s, j)).sum::<Mat2>().scale_re(w)
    }

    /// Writes the field as a `[2N−1 (×d), N (×d), 2, 2]` block.
    pub fn write_binary(&self, path: &Path) -> Result<io::BlockManifest> {
        let d = self.grid.dim;
        let mut shape = vec![self.x_nodes() as u64; d];
        shape.extend(std::iter::repeat_n(self.grid.n as u64, d));
        shape.extend([2, 2]);
        let kind = match self.kind {
            FieldKind::Wigner => "wigner",
            FieldKind::Husimi => "husimi",
        };
        io::write_block(
            path,
            kind,
            &self.grid,
            &shape,
            self.values.iter().flat_map(|m| [m.0[0][0], m.0[0][1], m.0[1][0], m.0[1][1]]),
        )
    }

    /// CSV of every `stride`-th node per axis: `p_1.., x_1.., re00, im00, ...`.
    pub fn write_csv<W: Write>(&self, stride: usize, w: W) -> Result<()> {
        if stride == 0 {
            return Err(Error::contract("stride must be positive"));
        }
        let d = self.grid.dim;
        let mut wr = csv::Writer::from_writer(w);
        let mut head: Vec<String> = (1..=d).map(|k| format!("p{k}")).collect();
        head.extend((1..=d).map(|k| format!("x{k}")));
        for e in ["00", "01", "10", "11"] {
            head.push(format!("re{e}"));
            head.push(format!("im{e}"));
        }
        wr.write_record(&head)?;
        let xn = self.x_nodes();
        let keep = |mut idx: usize, base: usize| {
            (0..d).all(|_| {
                let ok = (idx % base) % stride == 0;
                idx /= base;
                ok
            })
        };
        for s in (0..self.x_sites()).filter(|&s| keep(s, xn)) {
            for j in (0..self.p_sites()).filter(|&j| keep(j, self.grid.n)) {
                let (p, x) = self.coordinates(s, j);
                let m = self.at(s, j);
                let mut rec: Vec<String> = p.iter().chain(&x).map(|v| format!("{v:.10e}")).collect();
                for (r, c) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    rec.push(format!("{:.10e}", m.0[r][c].re));
                    rec.push(format!("{:.10e}", m.0[r][c].im));
                }
                wr.write_record(&rec)?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

fn cell_weight(g: &GridSpec) -> f64 {
    (g.dp() * 0.5 * g.dx() / (2.0 * std::f64::consts::PI * g.hbar)).powi(g.dim as i32)
}

/// `W_{js} = 2^d Σ_{a+b=s} e^{i p_j·(x_a − x_b)/ħ} ψ_b ψ_a†`.
pub fn wigner_transform(psi: &[C64], grid: &GridSpec) -> Result<MatrixPhaseField> {
    grid.check()?;
    let sites = grid.sites();
    if psi.len() != 2 * sites {
        return Err(Error::contract(format!("spinor vector must have length {}", 2 * sites)));
    }
    let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::contract(format!("spinor vector not normalized: ‖ψ‖² = {norm}")));
    }
    let (n, d) = (grid.n, grid.dim);
    let xn = 2 * n - 1;
    let xs = xn.pow(d as u32);
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_inverse(n);
    let phase: Vec<C64> = (0..2 * n)
        .map(|k| {
            let m = k as f64 - n as f64;
            C64::from_polar(1.0, std::f64::consts::PI * (1.0 - n as f64) * m / n as f64)
        })
        .collect();
    let scale = 2f64.powi(d as i32);
    let (up, dn) = psi.split_at(sites);
    let blocks: Vec<Vec<Mat2>> = (0..xs)
        .into_par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(line, scratch), s| {
                let mut sidx = vec![0usize; d];
                let mut r = s;
                for k in (0..d).rev() {
                    sidx[k] = r % xn;
                    r /= xn;
                }
                let mut ent: [Vec<C64>; 4] = std::array::from_fn(|_| vec![C64::new(0.0, 0.0); sites]);
                let lo: Vec<usize> = sidx.iter().map(|&sk| sk.saturating_sub(n - 1)).collect();
                let hi: Vec<usize> = sidx.iter().map(|&sk| sk.min(n - 1)).collect();
                let mut a = lo.clone();
                'outer: loop {
                    let mut asite = 0usize;
                    let mut bsite = 0usize;
                    let mut fsite = 0usize;
                    let mut ph = C64::new(scale, 0.0);
                    for k in 0..d {
                        let bk = sidx[k] - a[k];
                        let m = a[k] as isize - bk as isize;
                        asite = asite * n + a[k];
                        bsite = bsite * n + bk;
                        fsite = fsite * n + m.rem_euclid(n as isize) as usize;
                        ph *= phase[(m + n as isize) as usize];
                    }
                    let pb = [up[bsite], dn[bsite]];
                    let pa = [up[asite].conj(), dn[asite].conj()];
                    for (q, (rr, cc)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                        ent[q][fsite] += pb[rr] * pa[cc] * ph;
                    }
                    let mut k = d;
                    loop {
                        if k == 0 {
                            break 'outer;
                        }
                        k -= 1;
                        if a[k] < hi[k] {
                            a[k] += 1;
                            break;
                        }
                        a[k] = lo[k];
                    }
                }
                for e in ent.iter_mut() {
                    fft_nd(e, n, d, &fft, line, scratch);
                }
                (0..sites)
                    .map(|j| Mat2::new(ent[0][j], ent[1][j], ent[2][j], ent[3][j]))
                    .collect()
            },
        )
        .collect();
    let values: Vec<Mat2> = blocks.into_iter().flatten().collect();
    let normalization = values.iter().map(|m| m.trace().re).sum::<f64>() * cell_weight(grid);
    Ok(MatrixPhaseField {
        grid: grid.clone(),
        kind: FieldKind::Wigner,
        values,
        normalization,
    })
}

/// Linear (zero padded) convolution of every line along `axis` of a
/// row-major complex array with a real kernel `k(t)`, `t = −(len−1)..len−1`.
fn convolve_axis(data: &mut [C64], dims: &[usize], axis: usize, kernel: &dyn Fn(isize) -> f64) {
    let len = dims[axis];
    let stride: usize = dims[axis + 1..].iter().product();
    let block = stride * len;
    let padded = 2 * len - 1;
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(padded);
    let inv = planner.plan_fft_inverse(padded);
    let mut kf: Vec<C64> = (0..padded)
        .map(|i| {
            let t = if i < len { i as isize } else { i as isize - padded as isize };
            C64::new(kernel(t), 0.0)
        })
        .collect();
    fwd.process(&mut kf);
    let inv_len = 1.0 / padded as f64;
    let lines: Vec<usize> = (0..data.len())
        .step_by(block)
        .flat_map(|outer| (0..stride).map(move |inner| outer + inner))
        .collect();
    let results: Vec<Vec<C64>> = lines
        .par_iter()
        .map(|&base| {
            let mut buf = vec![C64::new(0.0, 0.0); padded];
            for k in 0..len {
                buf[k] = data[base + k * stride];
            }
            fwd.process(&mut buf);
            for (b, k) in buf.iter_mut().zip(&kf) {
                *b *= k * inv_len;
            }
            inv.process(&mut buf);
            buf.truncate(len);
            buf
        })
        .collect();
    for (&base, line) in lines.iter().zip(results) {
        for k in 0..len {
            data[base + k * stride] = line[k];
        }
    }
}

/// Largest tolerated loss of `Σ tr · cell` under smoothing.
pub const HUSIMI_MASS_TOL: f64 = 1e-6;

/// Entrywise convolution with `(πħ)^{−d} e^{−(|p−q|² + |x−y|²)/ħ}`.
pub fn husimi_transform(w: &MatrixPhaseField) -> Result<MatrixPhaseField> {
    if w.kind != FieldKind::Wigner {
        return Err(Error::contract("Husimi transform expects a Wigner field"));
    }
    let g = &w.grid;
    let d = g.dim;
    let mut dims = vec![w.x_nodes(); d];
    dims.extend(std::iter::repeat_n(g.n, d));
    let hb = g.hbar;
    let norm = 1.0 / (std::f64::consts::PI * hb).sqrt();
    let (hx, hp) = (0.5 * g.dx(), g.dp());
    let mut out = w.values.clone();
    let mut chan: Vec<C64> = vec![C64::new(0.0, 0.0); out.len()];
    for (r, c) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        for (v, m) in chan.iter_mut().zip(&out) {
            *v = m.0[r][c];
        }
        for axis in 0..2 * d {
            let h = if axis < d { hx } else { hp };
            let kern = move |t: isize| {
                let u = t as f64 * h;
                norm * (-u * u / hb).exp() * h
            };
            convolve_axis(&mut chan, &dims, axis, &kern);
        }
        for (m, v) in out.iter_mut().zip(&chan) {
            m.0[r][c] = *v;
        }
    }
    // hermitian by construction up to round-off
    for m in out.iter_mut() {
        *m = (*m + m.adjoint()).scale_re(0.5);
    }
    let normalization = out.iter().map(|m| m.trace().re).sum::<f64>() * cell_weight(g);
    let loss = (normalization - w.normalization).abs();
    if loss > HUSIMI_MASS_TOL {
        return Err(Error::Resolution(format!(
            "Gaussian smoothing lost mass {loss:e}; the grid is too small for the kernel tail"
        )));
    }
    Ok(MatrixPhaseField {
        grid: g.clone(),
        kind: FieldKind::Husimi,
        values: out,
        normalization,
    })
}

/// `Σ tr(W·B)·cell`, real part.
pub fn expectation_from_wigner(w: &MatrixPhaseField, b: &MatrixSymbol) -> Result<f64> {
    Ok(w.integrate(|p, x, m| Ok((*m * b.eval(p, x)?).trace()))?.re)
}

pub fn expectation_from_wigner_on(w: &MatrixPhaseField, b: &MatrixSymbol, grid: &GridSpec) -> Result<f64> {
    if *grid != w.grid {
        return Err(Error::contract("field and observable grids differ"));
    }
    expectation_from_wigner(w, b)
}

type TestFn = fn(&[f64], &[f64]) -> f64;

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

/// Fixed smooth scalar test symbols for the weak equidistribution check.
pub fn test_dictionary() -> Vec<(&'static str, TestFn)> {
    vec![
        ("one", |_, _| 1.0),
        ("x_squared", |_, x| sq(x)),
        ("p_squared", |p, _| sq(p)),
        ("x_dot_p", |p, x| p.iter().zip(x).map(|(a, b)| a * b).sum()),
        ("cos_x1", |_, x| x[0].cos()),
        ("cos_p1", |p, _| p[0].cos()),
        ("gauss_x", |_, x| (-0.5 * sq(x)).exp()),
        ("x1_quartic", |_, x| x[0].powi(4)),
        ("x2_p2", |p, x| sq(x) * sq(p)),
        ("sin2_x1_p1", |p, x| (x[0] + p[0]).sin().powi(2)),
    ]
}

/// `μ_E(f)` for each dictionary symbol from one shell sample.
pub fn dictionary_targets(model: &HamiltonianModel, sampler: &ShellSampler, n: usize) -> Result<Vec<f64>> {
    let pts = sample_liouville(model, sampler, n)?;
    Ok(test_dictionary()
        .iter()
        .map(|(_, f)| pts.iter().map(|z| f(&z.p, &z.x)).sum::<f64>() / n as f64)
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Equidistribution {
    /// `max_k |⟨f_k⟩_H − μ_E(f_k)|` over the dictionary.
    pub scalar_distance: f64,
    /// `Σ‖offdiagonal block‖_F / Σ tr H`.
    pub offdiag_mass: f64,
    /// Normalized `tr(H σ_k)` pairings, `k = 1, 2, 3`.
    pub spin_pairings: [f64; 3],
    pub pairings: Vec<f64>,
}

pub fn equidistribution_distance(
    h: &MatrixPhaseField,
    model: &HamiltonianModel,
    sampler: &ShellSampler,
    n: usize,
) -> Result<Equidistribution> {
    let targets = dictionary_targets(model, sampler, n)?;
    equidistribution_against(h, &targets)
}

/// As [`equidistribution_distance`] with precomputed dictionary targets.
pub fn equidistribution_against(h: &MatrixPhaseField, targets: &[f64]) -> Result<Equidistribution> {
    let dict = test_dictionary();
    if targets.len() != dict.len() {
        return Err(Error::contract("one target per dictionary symbol"));
    }
    let mass = h.integrate(|_, _, m| Ok(m.trace()))?.re;
    if !(mass > 0.0) {
        return Err(Error::contract("field has no positive mass"));
    }
    let mut pairings = Vec::with_capacity(dict.len());
    for (_, f) in &dict {
        pairings.push(h.integrate(|p, x, m| Ok(m.trace() * f(p, x)))?.re / mass);
    }
    let scalar_distance = pairings.iter().zip(targets).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let off = h.integrate(|_, _, m| Ok(C64::new((m.0[0][1].norm_sqr() + m.0[1][0].norm_sqr()).sqrt(), 0.0)))?.re;
    let mut spin_pairings = [0.0; 3];
    for axis in PauliAxis::ALL {
        let s = axis.matrix();
        spin_pairings[axis.index()] = h.integrate(|_, _, m| Ok((*m * s).trace()))?.re / mass;
    }
    Ok(Equidistribution {
        scalar_distance,
        offdiag_mass: off / mass,
        spin_pairings,
        pairings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::{build_pauli_operator, diagonalize};
    use crate::weyl::weyl_quantize;

    fn ground_state(grid: &GridSpec, spin: [C64; 2]) -> Vec<C64> {
        let s = grid.sites();
        let phi: Vec<f64> = (0..s).map(|a| (-grid.x_at(a).powi(2) / (2.0 * grid.hbar)).exp()).collect();
        let nrm = phi.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut v = vec![C64::new(0.0, 0.0); 2 * s];
        for a in 0..s {
            v[a] = spin[0] * phi[a] / nrm;
            v[s + a] = spin[1] * phi[a] / nrm;
        }
        v
    }

    #[test]
    fn ground_state_oracles() {
        let grid = GridSpec::balanced(1, 64, 0.1).unwrap();
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        let psi = ground_state(&grid, [one, zero]);
        let w = wigner_transform(&psi, &grid).unwrap();
        assert!((w.normalization() - 1.0).abs() < 1e-8);
        let mut worst = 0.0f64;
        for s in 0..w.x_sites() {
            for j in 0..w.p_sites() {
                let (p, x) = w.coordinates(s, j);
                let m = w.at(s, j);
                if p[0].abs() > 0.5 * grid.p_max() {
                    continue;
                }
                let exact = 2.0 * (-(p[0] * p[0] + x[0] * x[0]) / grid.hbar).exp();
                worst = worst.max((m.0[0][0] - C64::new(exact, 0.0)).norm());
                worst = worst.max(m.0[0][1].norm()).max(m.0[1][0].norm()).max(m.0[1][1].norm());
            }
        }
        assert!(worst < 1e-8, "{worst}");
        let hu = husimi_transform(&w).unwrap();
        assert!((hu.normalization() - 1.0).abs() < 1e-6);
        let mut worst = 0.0f64;
        for s in 0..hu.x_sites() {
            for j in 0..hu.p_sites() {
                let (p, x) = hu.coordinates(s, j);
                let exact = (-(p[0] * p[0] + x[0] * x[0]) / (2.0 * grid.hbar)).exp();
                let m = hu.at(s, j);
                worst = worst.max((m.0[0][0].re - exact).abs()).max(m.0[0][1].norm());
            }
        }
        assert!(worst < 1e-8, "{worst}");
        assert!(expectation_from_wigner(&w, &MatrixSymbol::position(0)).unwrap().abs() < 1e-8);
        assert!((expectation_from_wigner(&w, &MatrixSymbol::matrix_unit(0, 0)).unwrap() - 1.0).abs() < 1e-8);
        assert!((expectation_from_wigner(&w, &MatrixSymbol::identity()).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn equal_spin_components_give_rank_one() {
        let grid = GridSpec::balanced(1, 32, 0.1).unwrap();
        let c = C64::new(0.5f64.sqrt(), 0.0);
        let w = wigner_transform(&ground_state(&grid, [c, c]), &grid).unwrap();
        assert!(w.values().iter().all(|m| m.det().norm() < 1e-12));
        let bad: Vec<C64> = vec![C64::new(1.0, 0.0); 64];
        assert!(wigner_transform(&bad, &grid).is_err());
    }

    #[test]
    fn marginal_is_the_density_matrix() {
        let grid = GridSpec::balanced(1, 32, 0.1).unwrap();
        let psi: Vec<C64> = (0..64)
            .map(|i| C64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()) * (-(grid.x_at(i % 32)).powi(2)).exp())
            .collect();
        let nrm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let psi: Vec<C64> = psi.iter().map(|z| z / nrm).collect();
        let w = wigner_transform(&psi, &grid).unwrap();
        for a in 0..32 {
            let m = w.marginal(2 * a).scale_re(0.5 * grid.dx());
            let rho = Mat2::new(
                psi[a] * psi[a].conj(),
                psi[a] * psi[32 + a].conj(),
                psi[32 + a] * psi[a].conj(),
                psi[32 + a] * psi[32 + a].conj(),
            );
            assert!((m - rho).max_abs() < 1e-12);
        }
        assert!(w.max_hermiticity_defect() < 1e-10);
    }

    #[test]
    fn duality_and_positivity_on_excited_state() {
        let model = HamiltonianModel::harmonic(1, 1.0, 0.5).unwrap();
        let grid = GridSpec::balanced(1, 64, 0.1).unwrap();
        let d = diagonalize(&build_pauli_operator(&model, &grid).unwrap(), Some(PauliAxis::Z)).unwrap();
        let psi: Vec<C64> = (0..128).map(|i| d.vectors[(i, 2)]).collect();
        let w = wigner_transform(&psi, &grid).unwrap();
        assert!(w.min_eigenvalue() < -0.1);
        let hu = husimi_transform(&w).unwrap();
        assert!(hu.min_eigenvalue() >= -1e-8);
        let b = MatrixSymbol::new("b", true, |p, x| Mat2::from_pauli(x[0] * x[0], [p[0], x[0].sin(), 0.3]));
        let op = weyl_quantize(&b, &grid).unwrap();
        let direct = op.expectation(&psi).unwrap().re;
        assert!((expectation_from_wigner(&w, &b).unwrap() - direct).abs() < 1e-10);
    }

    #[test]
    fn exports() {
        let grid = GridSpec::balanced(1, 8, 0.5).unwrap();
        let psi = ground_state(&grid, [C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let w = wigner_transform(&psi, &grid).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = w.write_binary(&dir.path().join("w.bin")).unwrap();
        assert_eq!(m.shape, vec![15, 8, 2, 2]);
        let mut buf = Vec::new();
        w.write_csv(2, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 8 * 4);
    }
}
