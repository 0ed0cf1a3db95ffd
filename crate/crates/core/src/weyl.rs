//! Weyl quantization of 2×2 matrix symbols on a finite grid, the truncated
//! Moyal product, the matrix Poisson bracket and the leading Egorov symbol.
//!
//! Grid conventions (per axis): `x_a = −L + (a + ½)·dx` with `dx = 2L/N`,
//! and the dual momenta `p_j = (j + ½ − N/2)·Δp` with `Δp = πħ/L`. Both
//! lattices are symmetric under reflection. Wavefunctions are grid vectors
//! normalized by `Σ|ψ|² = 1`; the Hilbert index is `spin·N^d + site` with a
//! row-major site index.

use std::path::Path;
use std::sync::Arc;

use faer::{Mat, Side};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::mat2::{Mat2, PauliAxis, C64};
use crate::ode::Tolerance;
use crate::phase_flow::{HamiltonianModel, PhasePoint};
use crate::spin_transport::transport;
use crate::symbol::{MatrixSymbol, MultiIndex, StencilSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    /// Position domain `[−L, L)` per axis.
    pub half_width: f64,
    /// Points per axis; must be even.
    pub n: usize,
    pub hbar: f64,
}

impl GridSpec {
    pub fn new(dim: usize, half_width: f64, n: usize, hbar: f64) -> Result<Self> {
        let g = GridSpec {
            dim,
            half_width,
            n,
            hbar,
        };
        g.check()?;
        Ok(g)
    }

    /// Grid whose position and momentum spacings coincide, `L = (πħN/2)^{1/2}`.
    pub fn balanced(dim: usize, n: usize, hbar: f64) -> Result<Self> {
        GridSpec::new(dim, (std::f64::consts::PI * hbar * n as f64 / 2.0).sqrt(), n, hbar)
    }

    pub fn check(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::contract("grid dimension must be at least 1"));
        }
        if self.n < 2 || self.n % 2 != 0 {
            return Err(Error::contract(format!("points per axis must be even and >= 2, got {}", self.n)));
        }
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(Error::contract("half-width must be positive"));
        }
        if !(self.hbar > 0.0 && self.hbar.is_finite()) {
            return Err(Error::contract("hbar must be positive"));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn dp(&self) -> f64 {
        std::f64::consts::PI * self.hbar / self.half_width
    }

    /// Largest representable |p|, `N·Δp/2`.
    pub fn p_max(&self) -> f64 {
        0.5 * self.n as f64 * self.dp()
    }

    pub fn x_at(&self, a: usize) -> f64 {
        -self.half_width + (a as f64 + 0.5) * self.dx()
    }

    pub fn p_at(&self, j: usize) -> f64 {
        (j as f64 + 0.5 - 0.5 * self.n as f64) * self.dp()
    }

    /// Midpoint `(x_a + x_b)/2` for `s = a + b`.
    pub fn mid_at(&self, s: usize) -> f64 {
        -self.half_width + 0.5 * (s as f64 + 1.0) * self.dx()
    }

    pub fn sites(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn hilbert_dim(&self) -> usize {
        2 * self.sites()
    }

    /// Per-axis indices of a site, slowest axis first.
    pub fn site_indices(&self, mut site: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim];
        for k in (0..self.dim).rev() {
            idx[k] = site % self.n;
            site /= self.n;
        }
        idx
    }

    pub fn site_position(&self, site: usize) -> Vec<f64> {
        self.site_indices(site).into_iter().map(|a| self.x_at(a)).collect()
    }

    fn same(&self, other: &GridSpec) -> bool {
        self == other
    }
}

/// A dense operator on `C² ⊗ C^{N^d}`.
#[derive(Clone, Debug)]
pub struct WeylOperator {
    matrix: Mat<C64>,
    grid: GridSpec,
    hermitian: bool,
    hermiticity_defect: f64,
}

impl WeylOperator {
    pub fn from_matrix(grid: &GridSpec, matrix: Mat<C64>) -> Result<Self> {
        let n = grid.hilbert_dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::contract(format!("operator must be {n}×{n}")));
        }
        let defect = relative_defect(&matrix);
        Ok(WeylOperator {
            matrix,
            grid: grid.clone(),
            hermitian: defect <= 1e-12,
            hermiticity_defect: defect,
        })
    }

    pub fn identity(grid: &GridSpec) -> Self {
        let n = grid.hilbert_dim();
        WeylOperator {
            matrix: Mat::identity(n, n),
            grid: grid.clone(),
            hermitian: true,
            hermiticity_defect: 0.0,
        }
    }

    /// `σ̂_k ⊗ Id`.
    pub fn spin(grid: &GridSpec, axis: PauliAxis) -> Self {
        let s = grid.sites();
        let m = Mat2::pauli(axis);
        let mut matrix = Mat::zeros(2 * s, 2 * s);
        for r in 0..2 {
            for c in 0..2 {
                if m.0[r][c] != C64::new(0.0, 0.0) {
                    for a in 0..s {
                        matrix[(r * s + a, c * s + a)] = m.0[r][c];
                    }
                }
            }
        }
        WeylOperator {
            matrix,
            grid: grid.clone(),
            hermitian: true,
            hermiticity_defect: 0.0,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Mat<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Mat<C64> {
        self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// `‖Op − Op†‖_F / ‖Op‖_F` measured before any symmetrization.
    pub fn hermiticity_defect(&self) -> f64 {
        self.hermiticity_defect
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.matrix.norm_l2()
    }

    /// Largest singular value.
    pub fn operator_norm(&self) -> Result<f64> {
        if self.hermitian {
            let ev = self
                .matrix
                .self_adjoint_eigenvalues(Side::Lower)
                .map_err(|e| Error::Solver(format!("{e:?}")))?;
            Ok(ev.iter().map(|v| v.abs()).fold(0.0, f64::max))
        } else {
            let sv = self.matrix.singular_values().map_err(|e| Error::Solver(format!("{e:?}")))?;
            Ok(sv.iter().copied().fold(0.0, f64::max))
        }
    }

    pub fn apply(&self, psi: &[C64]) -> Result<Vec<C64>> {
        if psi.len() != self.dim() {
            return Err(Error::contract("vector length does not match the operator"));
        }
        let v = Mat::from_fn(psi.len(), 1, |i, _| psi[i]);
        let w = &self.matrix * &v;
        Ok((0..psi.len()).map(|i| w[(i, 0)]).collect())
    }

    /// `⟨ψ, Op ψ⟩`.
    pub fn expectation(&self, psi: &[C64]) -> Result<C64> {
        let w = self.apply(psi)?;
        Ok(psi.iter().zip(&w).map(|(a, b)| a.conj() * b).sum())
    }

    fn check_same(&self, other: &WeylOperator) -> Result<()> {
        if !self.grid.same(&other.grid) {
            return Err(Error::contract("operators live on different grids"));
        }
        Ok(())
    }

    fn derived(&self, matrix: Mat<C64>) -> WeylOperator {
        let defect = relative_defect(&matrix);
        WeylOperator {
            matrix,
            grid: self.grid.clone(),
            hermitian: defect <= 1e-12,
            hermiticity_defect: defect,
        }
    }

    pub fn matmul(&self, other: &WeylOperator) -> Result<WeylOperator> {
        self.check_same(other)?;
        Ok(self.derived(&self.matrix * &other.matrix))
    }

    pub fn add(&self, other: &WeylOperator) -> Result<WeylOperator> {
        self.check_same(other)?;
        Ok(self.derived(&self.matrix + &other.matrix))
    }

    pub fn sub(&self, other: &WeylOperator) -> Result<WeylOperator> {
        self.check_same(other)?;
        Ok(self.derived(&self.matrix - &other.matrix))
    }

    pub fn scaled(&self, s: f64) -> WeylOperator {
        let mut m = self.matrix.clone();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                m[(i, j)] *= s;
            }
        }
        WeylOperator {
            matrix: m,
            grid: self.grid.clone(),
            hermitian: self.hermitian,
            hermiticity_defect: self.hermiticity_defect,
        }
    }

    pub fn adjoint(&self) -> WeylOperator {
        self.derived(self.matrix.adjoint().to_owned())
    }

    /// `[A, B] = AB − BA`.
    pub fn commutator(&self, other: &WeylOperator) -> Result<WeylOperator> {
        self.check_same(other)?;
        Ok(self.derived(&self.matrix * &other.matrix - &other.matrix * &self.matrix))
    }

    /// Writes the documented binary block and its manifest.
    pub fn write_binary(&self, path: &Path) -> Result<io::BlockManifest> {
        let n = self.dim();
        let m = &self.matrix;
        io::write_block(
            path,
            "operator",
            &self.grid,
            &[n as u64, n as u64],
            (0..n).flat_map(move |i| (0..n).map(move |j| m[(i, j)])),
        )
    }
}

fn relative_defect(m: &Mat<C64>) -> f64 {
    let norm = m.norm_l2();
    if norm == 0.0 {
        return 0.0;
    }
    (m - m.adjoint()).norm_l2() / norm
}

pub(crate) fn symmetrize(m: &mut Mat<C64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in j..n {
            let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
    }
}

/// Options for [`weyl_quantize_with`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QuantizeOptions {
    /// Escalate resolution warnings to errors.
    pub strict: bool,
}

pub fn weyl_quantize(b: &MatrixSymbol, grid: &GridSpec) -> Result<WeylOperator> {
    weyl_quantize_with(b, grid, QuantizeOptions::default())
}

fn resolution_check(b: &MatrixSymbol, grid: &GridSpec, strict: bool) -> Result<()> {
    let mut problems = Vec::new();
    if let Some(px) = b.support().momentum_extent {
        if px > grid.p_max() {
            problems.push(format!("momentum extent {px} exceeds grid p_max {}", grid.p_max()));
        }
    }
    if let Some(xx) = b.support().position_extent {
        if xx > grid.half_width {
            problems.push(format!("position extent {xx} exceeds half-width {}", grid.half_width));
        }
    }
    if problems.is_empty() {
        return Ok(());
    }
    let msg = format!("symbol `{}`: {}", b.name(), problems.join("; "));
    if strict {
        Err(Error::Resolution(msg))
    } else {
        log::warn!("{msg}");
        Ok(())
    }
}

/// In-place unnormalized `e^{+2πi j·m/N}` transform of a row-major `N^d` array.
pub(crate) fn fft_nd(data: &mut [C64], n: usize, d: usize, fft: &Arc<dyn Fft<f64>>, line: &mut Vec<C64>, scratch: &mut Vec<C64>) {
    line.resize(n, C64::new(0.0, 0.0));
    scratch.resize(fft.get_inplace_scratch_len(), C64::new(0.0, 0.0));
    let total = data.len();
    for axis in 0..d {
        let stride = n.pow((d - 1 - axis) as u32);
        let block = stride * n;
        for outer in (0..total).step_by(block) {
            for inner in 0..stride {
                let base = outer + inner;
                for k in 0..n {
                    line[k] = data[base + k * stride];
                }
                fft.process_with_scratch(line, scratch);
                for k in 0..n {
                    data[base + k * stride] = line[k];
                }
            }
        }
    }
}

/// `Op_ab = N^{−d} Σ_j e^{i p_j·(x_a − x_b)/ħ} B(p_j, (x_a + x_b)/2)` per
/// spin block, assembled by one inverse FFT per midpoint. Hermitian symbols
/// are symmetrized after the defect is recorded.
pub fn weyl_quantize_with(b: &MatrixSymbol, grid: &GridSpec, opts: QuantizeOptions) -> Result<WeylOperator> {
    grid.check()?;
    resolution_check(b, grid, opts.strict)?;
    assemble(grid, b.is_hermitian(), b.name(), |_, p, x| b.eval(p, x))
}

/// Number of quantization nodes `(2N − 1)^d · N^d`; node index is
/// `s · N^d + j` for midpoint `s` and momentum site `j`.
pub fn quantization_nodes(grid: &GridSpec) -> usize {
    (2 * grid.n - 1).pow(grid.dim as u32) * grid.sites()
}

/// Kernel assembly from nodal values `value(node, p_j, c_s)`.
fn assemble<F>(grid: &GridSpec, hermitian: bool, name: &str, value: F) -> Result<WeylOperator>
where
    F: Fn(usize, &[f64], &[f64]) -> Result<Mat2> + Sync,
{
    let (n, d) = (grid.n, grid.dim);
    let sites = grid.sites();
    let nmid = 2 * n - 1;
    let mids = nmid.pow(d as u32);
    let fft = FftPlanner::new().plan_fft_inverse(n);
    let norm = 1.0 / sites as f64;
    // e^{iπ(1−N)m/N} for m in (−N, N), stored at m + N
    let phase: Vec<C64> = (0..2 * n)
        .map(|k| {
            let m = k as f64 - n as f64;
            C64::from_polar(1.0, std::f64::consts::PI * (1.0 - n as f64) * m / n as f64)
        })
        .collect();
    let ps: Vec<f64> = (0..n).map(|j| grid.p_at(j)).collect();

    let mut matrix = Mat::<C64>::zeros(2 * sites, 2 * sites);
    let chunk = 64usize.max(1);
    let mut start = 0;
    while start < mids {
        let end = (start + chunk).min(mids);
        let blocks: Result<Vec<(usize, [Vec<C64>; 4])>> = (start..end)
            .into_par_iter()
            .map_init(
                || (Vec::new(), Vec::new()),
                |(line, scratch), s| {
                    let mut sidx = vec![0usize; d];
                    let mut r = s;
                    for k in (0..d).rev() {
                        sidx[k] = r % nmid;
                        r /= nmid;
                    }
                    let x: Vec<f64> = sidx.iter().map(|&sk| grid.mid_at(sk)).collect();
                    let mut ent: [Vec<C64>; 4] = std::array::from_fn(|_| vec![C64::new(0.0, 0.0); sites]);
                    let mut p = vec![0.0; d];
                    for jsite in 0..sites {
                        let mut r = jsite;
                        for k in (0..d).rev() {
                            p[k] = ps[r % n];
                            r /= n;
                        }
                        let m = value(s * sites + jsite, &p, &x)?;
                        ent[0][jsite] = m.0[0][0];
                        ent[1][jsite] = m.0[0][1];
                        ent[2][jsite] = m.0[1][0];
                        ent[3][jsite] = m.0[1][1];
                    }
                    for e in ent.iter_mut() {
                        fft_nd(e, n, d, &fft, line, scratch);
                    }
                    Ok((s, ent))
                },
            )
            .collect();
        for (s, ent) in blocks? {
            let mut sidx = vec![0usize; d];
            let mut r = s;
            for k in (0..d).rev() {
                sidx[k] = r % nmid;
                r /= nmid;
            }
            let lo: Vec<usize> = sidx.iter().map(|&sk| sk.saturating_sub(n - 1)).collect();
            let hi: Vec<usize> = sidx.iter().map(|&sk| sk.min(n - 1)).collect();
            if lo.iter().zip(&hi).any(|(l, h)| l > h) {
                continue;
            }
            let mut a = lo.clone();
            loop {
                let mut asite = 0usize;
                let mut bsite = 0usize;
                let mut fsite = 0usize;
                let mut ph = C64::new(norm, 0.0);
                for k in 0..d {
                    let bk = sidx[k] - a[k];
                    let m = a[k] as isize - bk as isize;
                    asite = asite * n + a[k];
                    bsite = bsite * n + bk;
                    fsite = fsite * n + m.rem_euclid(n as isize) as usize;
                    ph *= phase[(m + n as isize) as usize];
                }
                for (q, (r, c)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                    matrix[(r * sites + asite, c * sites + bsite)] = ent[q][fsite] * ph;
                }
                let mut k = d;
                loop {
                    if k == 0 {
                        break;
                    }
                    k -= 1;
                    if a[k] < hi[k] {
                        a[k] += 1;
                        break;
                    }
                    a[k] = lo[k];
                    if k == 0 {
                        k = usize::MAX;
                        break;
                    }
                }
                if k == usize::MAX {
                    break;
                }
            }
        }
        start = end;
    }
    let defect = relative_defect(&matrix);
    if hermitian {
        if defect > 1e-10 {
            log::warn!("quantized `{name}` has hermiticity defect {defect:e}; symmetrizing");
        }
        symmetrize(&mut matrix);
    }
    Ok(WeylOperator {
        matrix,
        grid: grid.clone(),
        hermitian: hermitian || defect <= 1e-12,
        hermiticity_defect: defect,
    })
}

/// Precomputed expansion of `Σ_{k≤K} (1/k!)(iħ/2)^k σ^k` with
/// `σ = Σ_i (∂_{x_i} ⊗ ∂_{p_i} − ∂_{p_i} ⊗ ∂_{x_i})`.
#[derive(Clone, Debug)]
struct MoyalPlan {
    left: StencilSet,
    right: StencilSet,
    lefts: Vec<MultiIndex>,
    rights: Vec<MultiIndex>,
    /// `(left derivative, right derivative, coefficient)`.
    terms: Vec<(usize, usize, C64)>,
}

impl MoyalPlan {
    fn new(dim: usize, order: usize, hbar: f64) -> Result<Self> {
        let zero: MultiIndex = vec![0; 2 * dim];
        let mut level: Vec<(MultiIndex, MultiIndex, f64)> = vec![(zero.clone(), zero, 1.0)];
        let mut all: Vec<(MultiIndex, MultiIndex, C64)> = vec![(level[0].0.clone(), level[0].1.clone(), C64::new(1.0, 0.0))];
        let mut fact = 1.0;
        for k in 1..=order {
            fact *= k as f64;
            let mut next: Vec<(MultiIndex, MultiIndex, f64)> = Vec::new();
            for (a, b, c) in &level {
                for i in 0..dim {
                    for (l, r, sgn) in [(dim + i, i, 1.0), (i, dim + i, -1.0)] {
                        let mut a2 = a.clone();
                        let mut b2 = b.clone();
                        a2[l] += 1;
                        b2[r] += 1;
                        match next.iter_mut().find(|(x, y, _)| *x == a2 && *y == b2) {
                            Some(t) => t.2 += c * sgn,
                            None => next.push((a2, b2, c * sgn)),
                        }
                    }
                }
            }
            next.retain(|t| t.2 != 0.0);
            let pref = C64::new(0.0, 0.5 * hbar).powi(k as i32) / fact;
            all.extend(next.iter().map(|(a, b, c)| (a.clone(), b.clone(), pref * *c)));
            level = next;
        }
        let mut lefts: Vec<MultiIndex> = Vec::new();
        let mut rights: Vec<MultiIndex> = Vec::new();
        let mut terms = Vec::new();
        for (a, b, c) in all {
            let ia = lefts.iter().position(|x| *x == a).unwrap_or_else(|| {
                lefts.push(a.clone());
                lefts.len() - 1
            });
            let ib = rights.iter().position(|x| *x == b).unwrap_or_else(|| {
                rights.push(b.clone());
                rights.len() - 1
            });
            terms.push((ia, ib, c));
        }
        Ok(MoyalPlan {
            left: StencilSet::new(&lefts)?,
            right: StencilSet::new(&rights)?,
            lefts,
            rights,
            terms,
        })
    }
}

/// Default finite-difference step for derivatives inside the star product.
pub const MOYAL_STEP: f64 = 1e-2;

pub fn moyal_star(b1: &MatrixSymbol, b2: &MatrixSymbol, order: usize, grid: &GridSpec) -> Result<MatrixSymbol> {
    moyal_star_with(b1, b2, order, grid, MOYAL_STEP)
}

/// Truncated star product with derivatives from 5-point central differences
/// of step `h` on the symbol closures. Evaluating the result at a point
/// whose stencil leaves the grid's phase-space box is a windowing error.
pub fn moyal_star_with(
    b1: &MatrixSymbol,
    b2: &MatrixSymbol,
    order: usize,
    grid: &GridSpec,
    h: f64,
) -> Result<MatrixSymbol> {
    grid.check()?;
    if order > 4 {
        return Err(Error::contract("star product truncation order must be at most 4"));
    }
    if !(h > 0.0) {
        return Err(Error::contract("finite-difference step must be positive"));
    }
    let plan = Arc::new(MoyalPlan::new(grid.dim, order, grid.hbar)?);
    let domain = star_domain(grid, h);
    let (a, b) = (b1.clone(), b2.clone());
    let name = format!("({})*[{order}]({})", b1.name(), b2.name());
    Ok(MatrixSymbol::fallible(name, false, move |p, x| {
        let (mut va, mut da, mut vb, mut db) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        plan.left.eval(&a, p, x, h, Some(&domain), &mut va, &mut da)?;
        plan.right.eval(&b, p, x, h, Some(&domain), &mut vb, &mut db)?;
        let mut acc = Mat2::zero();
        for &(i, j, c) in &plan.terms {
            acc += (da[i] * db[j]).scale(c);
        }
        Ok(acc)
    })
    .with_order(b1.order() + b2.order()))
}

fn star_domain(grid: &GridSpec, h: f64) -> impl Fn(&[f64], &[f64]) -> bool + Send + Sync + Clone {
    let xl = grid.half_width + 2.0 * h * (1.0 + 1e-9);
    let pl = grid.p_max() + 2.0 * h * (1.0 + 1e-9);
    move |p: &[f64], x: &[f64]| p.iter().all(|v| v.abs() <= pl) && x.iter().all(|v| v.abs() <= xl)
}

/// Finite-difference partials of one symbol, up to a total order, at every
/// quantization node of a grid. Lets many star products of the same
/// symbols be quantized without re-evaluating the closures.
#[derive(Clone, Debug)]
pub struct NodeJets {
    grid: GridSpec,
    order: usize,
    h: f64,
    name: String,
    alphas: Vec<MultiIndex>,
    /// `values[node · alphas.len() + k]`.
    values: Vec<Mat2>,
}

fn multi_indices(coords: usize, order: usize) -> Vec<MultiIndex> {
    let mut out: Vec<MultiIndex> = vec![vec![0; coords]];
    let mut level = out.clone();
    for _ in 0..order {
        let mut next: Vec<MultiIndex> = Vec::new();
        for a in &level {
            for k in 0..coords {
                let mut b = a.clone();
                b[k] += 1;
                if !next.contains(&b) {
                    next.push(b);
                }
            }
        }
        out.extend(next.iter().cloned());
        level = next;
    }
    out
}

impl NodeJets {
    pub fn new(b: &MatrixSymbol, grid: &GridSpec, order: usize, h: f64) -> Result<Self> {
        grid.check()?;
        if order > 4 || !(h > 0.0) {
            return Err(Error::contract("jets need order <= 4 and a positive step"));
        }
        let alphas = multi_indices(2 * grid.dim, order);
        let set = StencilSet::new(&alphas)?;
        let domain = star_domain(grid, h);
        let (n, d) = (grid.n, grid.dim);
        let nmid = 2 * n - 1;
        let mids = nmid.pow(d as u32);
        let sites = grid.sites();
        let blocks: Result<Vec<Vec<Mat2>>> = (0..mids)
            .into_par_iter()
            .map_init(
                || (Vec::new(), Vec::new()),
                |(vals, out), s| {
                    let mut x = vec![0.0; d];
                    let mut r = s;
                    for k in (0..d).rev() {
                        x[k] = grid.mid_at(r % nmid);
                        r /= nmid;
                    }
                    let mut p = vec![0.0; d];
                    let mut block = Vec::with_capacity(sites * alphas.len());
                    for jsite in 0..sites {
                        let mut r = jsite;
                        for k in (0..d).rev() {
                            p[k] = grid.p_at(r % n);
                            r /= n;
                        }
                        set.eval(b, &p, &x, h, Some(&domain), vals, out)?;
                        block.extend_from_slice(out);
                    }
                    Ok(block)
                },
            )
            .collect();
        Ok(NodeJets {
            grid: grid.clone(),
            order,
            h,
            name: b.name().to_string(),
            alphas,
            values: blocks?.concat(),
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn order(&self) -> usize {
        self.order
    }

    fn index_of(&self, alpha: &MultiIndex) -> Result<usize> {
        self.alphas
            .iter()
            .position(|a| a == alpha)
            .ok_or_else(|| Error::contract(format!("jets of `{}` lack the partial {alpha:?}", self.name)))
    }
}

/// `Op(B₁ ⋆ B₂)` truncated at `order`, from precomputed jets; equals
/// `weyl_quantize(moyal_star_with(B₁, B₂, order, grid, h))` up to round-off.
pub fn quantize_star(left: &NodeJets, right: &NodeJets, order: usize) -> Result<WeylOperator> {
    if left.grid != right.grid || left.h != right.h {
        return Err(Error::contract("jets were taken on different grids or steps"));
    }
    if order > left.order.min(right.order) {
        return Err(Error::contract("jets do not reach the requested order"));
    }
    let grid = &left.grid;
    let plan = MoyalPlan::new(grid.dim, order, grid.hbar)?;
    let terms: Vec<(usize, usize, C64)> = plan
        .terms
        .iter()
        .map(|&(i, j, c)| Ok((left.index_of(&plan.lefts[i])?, right.index_of(&plan.rights[j])?, c)))
        .collect::<Result<_>>()?;
    let (na, nb) = (left.alphas.len(), right.alphas.len());
    let name = format!("({})*[{order}]({})", left.name, right.name);
    assemble(grid, false, &name, |node, _, _| {
        let (l, r) = (&left.values[node * na..(node + 1) * na], &right.values[node * nb..(node + 1) * nb]);
        let mut acc = Mat2::zero();
        for &(i, j, c) in &terms {
            acc += (l[i] * r[j]).scale(c);
        }
        Ok(acc)
    })
}

const BRACKET_STEP: f64 = 1e-3;

/// `{A, B} = Σ_i ∂_{p_i}A·∂_{x_i}B − ∂_{x_i}A·∂_{p_i}B`, matrix products in
/// this order.
pub fn matrix_poisson_bracket(a: &MatrixSymbol, b: &MatrixSymbol) -> MatrixSymbol {
    let (a, b) = (a.clone(), b.clone());
    let name = format!("{{{},{}}}", a.name(), b.name());
    MatrixSymbol::fallible(name, false, move |p, x| {
        let d = p.len();
        let firsts: Vec<MultiIndex> = (0..2 * d)
            .map(|k| {
                let mut m = vec![0u8; 2 * d];
                m[k] = 1;
                m
            })
            .collect();
        let set = StencilSet::new(&firsts)?;
        let (mut v, mut da, mut db) = (Vec::new(), Vec::new(), Vec::new());
        set.eval(&a, p, x, BRACKET_STEP, None, &mut v, &mut da)?;
        set.eval(&b, p, x, BRACKET_STEP, None, &mut v, &mut db)?;
        let mut acc = Mat2::zero();
        for i in 0..d {
            acc += da[i] * db[d + i] - da[d + i] * db[i];
        }
        Ok(acc)
    })
}

/// `(p, x) ↦ d†(p,x,t)·B₀(Φ^t(p,x))·d(p,x,t)`, each evaluation running the
/// joint flow and transport from `(p, x)`.
pub fn egorov_symbol(model: &HamiltonianModel, b0: &MatrixSymbol, t: f64) -> MatrixSymbol {
    egorov_symbol_with(model, b0, t, Tolerance::new(1e-12))
}

pub fn egorov_symbol_with(model: &HamiltonianModel, b0: &MatrixSymbol, t: f64, tol: Tolerance) -> MatrixSymbol {
    let (m, b) = (model.clone(), b0.clone());
    let name = format!("egorov({}, t={t})", b0.name());
    MatrixSymbol::fallible(name, b0.is_hermitian(), move |p, x| {
        if t == 0.0 {
            return b.eval(p, x);
        }
        let z = PhasePoint::new(p.to_vec(), x.to_vec())?;
        let (zt, d) = transport(&m, &z, t, &tol)?;
        let v = b.eval(&zt.p, &zt.x)?;
        if v.0[0][1] == C64::new(0.0, 0.0) && v.0[1][0] == C64::new(0.0, 0.0) && v.0[0][0] == v.0[1][1] {
            return Ok(v);
        }
        Ok(d.adjoint_action(&v))
    })
    .with_order(b0.order())
}

/// `sup_z ‖∂_t B(t) − {H₀, B(t)} − i[H₁, B(t)]‖_F` over the probe points,
/// with `B(t)` the Egorov symbol, `∂_t` a central difference of step
/// `fd_step` and the bracket by finite differences.
pub fn transport_residual(
    model: &HamiltonianModel,
    b0: &MatrixSymbol,
    t: f64,
    fd_step: f64,
    probes: &[PhasePoint],
) -> Result<f64> {
    if !(t >= 0.0) || !(fd_step > 0.0) {
        return Err(Error::contract("need t >= 0 and a positive step"));
    }
    let tol = Tolerance::new(1e-13);
    let bt = egorov_symbol_with(model, b0, t, tol);
    let bp = egorov_symbol_with(model, b0, t + fd_step, tol);
    let bm = egorov_symbol_with(model, b0, t - fd_step, tol);
    let h0 = model.h0s.clone();
    let h0sym = MatrixSymbol::scalar("H0", move |p, x| h0(p, x));
    let bracket = matrix_poisson_bracket(&h0sym, &bt);
    let h1 = model.h1();
    let mut worst = 0.0f64;
    for z in probes {
        let (p, x) = (&z.p[..], &z.x[..]);
        let dt = (bp.eval(p, x)? - bm.eval(p, x)?).scale_re(0.5 / fd_step);
        let b = bt.eval(p, x)?;
        let comm = h1.eval(p, x)?.commutator(&b).scale(C64::new(0.0, 1.0));
        let r = dt - bracket.eval(p, x)? - comm;
        worst = worst.max(r.frobenius());
    }
    Ok(worst)
}
