//! Discretized Pauli operators and their spectral statistics: windowed
//! eigensystems, Weyl counts, Szegő averages, the S₂ variance, Heisenberg
//! evolution and the Egorov error curve.

use std::io::Write;
use std::path::Path;

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::mat2::{PauliAxis, C64};
use crate::ode::Tolerance;
use crate::phase_flow::HamiltonianModel;
use crate::skew_product::{ergodicity_report, sample_ensemble, shell_volume, ErgodicityReport, ShellSampler};
use crate::symbol::MatrixSymbol;
use crate::weyl::{egorov_symbol_with, symmetrize, weyl_quantize, weyl_quantize_with, GridSpec, QuantizeOptions, WeylOperator};

/// `I(E, ħ) = [E − ħω, E + ħω]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralWindow {
    pub energy: f64,
    pub omega: f64,
    pub hbar: f64,
}

impl SpectralWindow {
    pub fn new(energy: f64, omega: f64, hbar: f64) -> Result<Self> {
        if !energy.is_finite() || !(omega > 0.0) || !(hbar > 0.0) {
            return Err(Error::contract("window needs finite E and positive ω, ħ"));
        }
        Ok(SpectralWindow { energy, omega, hbar })
    }

    pub fn lo(&self) -> f64 {
        self.energy - self.hbar * self.omega
    }

    pub fn hi(&self) -> f64 {
        self.energy + self.hbar * self.omega
    }

    pub fn contains(&self, e: f64) -> bool {
        e >= self.lo() && e <= self.hi()
    }

    /// The window must sit inside the model's band `[E − ε, E + ε]`.
    pub fn check_band(&self, model: &HamiltonianModel) -> Result<()> {
        if self.lo() < model.energy - model.epsilon || self.hi() > model.energy + model.epsilon {
            return Err(Error::contract(format!(
                "window [{}, {}] leaves the band [{}, {}]",
                self.lo(),
                self.hi(),
                model.energy - model.epsilon,
                model.energy + model.epsilon
            )));
        }
        Ok(())
    }
}

/// Quantizes `H_{0,s}·Id + ħ·H₁` with `ħ` taken from the grid.
pub fn build_pauli_operator(model: &HamiltonianModel, grid: &GridSpec) -> Result<WeylOperator> {
    build_pauli_operator_with(model, grid, QuantizeOptions::default())
}

pub fn build_pauli_operator_with(model: &HamiltonianModel, grid: &GridSpec, opts: QuantizeOptions) -> Result<WeylOperator> {
    if model.dim != grid.dim {
        return Err(Error::contract(format!(
            "{}-dimensional model on a {}-dimensional grid",
            model.dim, grid.dim
        )));
    }
    weyl_quantize_with(&model.full_symbol(grid.hbar), grid, opts)
}

/// Applies `σ̂_k ⊗ Id` to a spinor grid vector.
pub fn apply_spin(axis: PauliAxis, v: &[C64]) -> Vec<C64> {
    let s = v.len() / 2;
    let (up, dn) = v.split_at(s);
    let i = C64::new(0.0, 1.0);
    match axis {
        PauliAxis::X => dn.iter().chain(up).copied().collect(),
        PauliAxis::Y => dn.iter().map(|z| -i * z).chain(up.iter().map(|z| i * z)).collect(),
        PauliAxis::Z => up.iter().copied().chain(dn.iter().map(|z| -z)).collect(),
    }
}

/// Full eigendecomposition of a hermitian operator.
#[derive(Clone, Debug)]
pub struct Diagonalization {
    pub energies: Vec<f64>,
    /// Eigenvectors as columns, matching `energies`.
    pub vectors: Mat<C64>,
    pub grid: GridSpec,
    /// `max |E_k|`, the operator norm.
    pub norm: f64,
}

/// Relative width below which eigenvalues are treated as one cluster.
pub const CLUSTER_TOL: f64 = 1e-9;

/// Dense eigendecomposition. Vectors inside each degenerate cluster are
/// rotated into the eigenbasis of `σ̂_axis` restricted to the cluster, then
/// every vector gets a fixed phase (largest component real positive).
pub fn diagonalize(op: &WeylOperator, cluster_axis: Option<PauliAxis>) -> Result<Diagonalization> {
    if !op.is_hermitian() {
        return Err(Error::contract("eigendecomposition needs a hermitian operator"));
    }
    let eig = op
        .matrix()
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Solver(format!("eigendecomposition failed: {e:?}")))?;
    let s = eig.S().column_vector();
    let n = op.dim();
    let energies: Vec<f64> = (0..n).map(|i| s[i].re).collect();
    let mut vectors = eig.U().to_owned();
    let norm = energies.iter().map(|e| e.abs()).fold(0.0, f64::max);
    if let Some(axis) = cluster_axis {
        let tol = CLUSTER_TOL * norm.max(f64::MIN_POSITIVE);
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && energies[end] - energies[end - 1] <= tol {
                end += 1;
            }
            if end - start > 1 {
                rotate_cluster(&mut vectors, start, end, axis)?;
            }
            start = end;
        }
    }
    for j in 0..n {
        let (mut best, mut arg) = (0.0, 0);
        for i in 0..n {
            let a = vectors[(i, j)].norm_sqr();
            if a > best * (1.0 + 1e-9) {
                best = a;
                arg = i;
            }
        }
        let ph = vectors[(arg, j)].conj() / vectors[(arg, j)].norm();
        for i in 0..n {
            vectors[(i, j)] *= ph;
        }
    }
    Ok(Diagonalization {
        energies,
        vectors,
        grid: op.grid().clone(),
        norm,
    })
}

fn rotate_cluster(v: &mut Mat<C64>, start: usize, end: usize, axis: PauliAxis) -> Result<()> {
    let k = end - start;
    let n = v.nrows();
    let cols: Vec<Vec<C64>> = (start..end).map(|j| (0..n).map(|i| v[(i, j)]).collect()).collect();
    let images: Vec<Vec<C64>> = cols.iter().map(|c| apply_spin(axis, c)).collect();
    let mut m = Mat::<C64>::from_fn(k, k, |a, b| cols[a].iter().zip(&images[b]).map(|(x, y)| x.conj() * y).sum());
    symmetrize(&mut m);
    let e = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Solver(format!("cluster rotation failed: {e:?}")))?;
    let w = e.U();
    for b in 0..k {
        for i in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for a in 0..k {
                acc += cols[a][i] * w[(a, b)];
            }
            v[(i, start + b)] = acc;
        }
    }
    Ok(())
}

/// Eigenpairs inside a spectral window.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub energies: Vec<f64>,
    /// Spinor grid vectors as columns.
    pub vectors: Mat<C64>,
    pub window: SpectralWindow,
    pub grid: GridSpec,
}

#[derive(Serialize)]
struct EigenManifest<'a> {
    window: &'a SpectralWindow,
    count: usize,
    energies: &'a [f64],
    grid: &'a GridSpec,
    spinors: Option<String>,
}

impl EigenSystem {
    /// `N_I`.
    pub fn count(&self) -> usize {
        self.energies.len()
    }

    pub fn vector(&self, k: usize) -> Vec<C64> {
        (0..self.vectors.nrows()).map(|i| self.vectors[(i, k)]).collect()
    }

    /// `max |⟨ψ_j, ψ_k⟩ − δ_jk|`.
    pub fn orthonormality_defect(&self) -> f64 {
        if self.count() == 0 {
            return 0.0;
        }
        let g = self.vectors.adjoint() * &self.vectors;
        let mut worst = 0.0f64;
        for j in 0..g.ncols() {
            for i in 0..g.nrows() {
                let d = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - C64::new(d, 0.0)).norm());
            }
        }
        worst
    }

    /// `max_k ‖Hψ_k − E_kψ_k‖`.
    pub fn max_residual(&self, op: &WeylOperator) -> f64 {
        if self.count() == 0 {
            return 0.0;
        }
        let hv = op.matrix() * &self.vectors;
        (0..self.count())
            .map(|k| {
                (0..hv.nrows())
                    .map(|i| (hv[(i, k)] - self.vectors[(i, k)] * self.energies[k]).norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// `Re ⟨ψ_k, B ψ_k⟩` for every window state.
    pub fn expectations(&self, b: &WeylOperator) -> Result<Vec<f64>> {
        if *b.grid() != self.grid {
            return Err(Error::contract("observable lives on a different grid"));
        }
        if self.count() == 0 {
            return Ok(Vec::new());
        }
        let bv = b.matrix() * &self.vectors;
        Ok((0..self.count())
            .map(|k| {
                (0..bv.nrows())
                    .map(|i| self.vectors[(i, k)].conj() * bv[(i, k)])
                    .sum::<C64>()
                    .re
            })
            .collect())
    }

    pub fn spin_expectations(&self, axis: PauliAxis) -> Vec<f64> {
        (0..self.count())
            .map(|k| {
                let v = self.vector(k);
                let w = apply_spin(axis, &v);
                v.iter().zip(&w).map(|(a, b)| a.conj() * b).sum::<C64>().re
            })
            .collect()
    }

    /// JSON manifest; with `spinor_file` the vectors are also written as a
    /// `[N_I, 2N^d]` block next to it.
    pub fn write_manifest(&self, path: &Path, spinor_file: Option<&Path>) -> Result<()> {
        if let Some(sp) = spinor_file {
            let n = self.vectors.nrows();
            let v = &self.vectors;
            io::write_block(
                sp,
                "spinors",
                &self.grid,
                &[self.count() as u64, n as u64],
                (0..self.count()).flat_map(move |k| (0..n).map(move |i| v[(i, k)])),
            )?;
        }
        let m = EigenManifest {
            window: &self.window,
            count: self.count(),
            energies: &self.energies,
            grid: &self.grid,
            spinors: spinor_file.and_then(|p| p.file_name()).map(|s| s.to_string_lossy().into_owned()),
        };
        std::fs::write(path, serde_json::to_string_pretty(&m)?)?;
        Ok(())
    }

    /// CSV with columns `k, E_k, expectation, sq_deviation`.
    pub fn write_expectation_csv<W: Write>(&self, b: &WeylOperator, target: f64, w: W) -> Result<()> {
        let ex = self.expectations(b)?;
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["k", "E_k", "expectation", "sq_deviation"])?;
        for (k, (e, v)) in self.energies.iter().zip(&ex).enumerate() {
            wr.write_record([
                k.to_string(),
                format!("{e:.17e}"),
                format!("{v:.17e}"),
                format!("{:.17e}", (v - target).powi(2)),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

impl Diagonalization {
    pub fn window(&self, window: &SpectralWindow) -> EigenSystem {
        let idx: Vec<usize> = (0..self.energies.len()).filter(|&k| window.contains(self.energies[k])).collect();
        let n = self.vectors.nrows();
        EigenSystem {
            energies: idx.iter().map(|&k| self.energies[k]).collect(),
            vectors: Mat::from_fn(n, idx.len(), |i, j| self.vectors[(i, idx[j])]),
            window: *window,
            grid: self.grid.clone(),
        }
    }
}

/// All eigenpairs inside the window, degenerate clusters resolved in the
/// `σ̂₃` basis.
pub fn solve_window(op: &WeylOperator, window: &SpectralWindow) -> Result<EigenSystem> {
    solve_window_with(op, window, Some(PauliAxis::Z))
}

pub fn solve_window_with(op: &WeylOperator, window: &SpectralWindow, cluster_axis: Option<PauliAxis>) -> Result<EigenSystem> {
    let diag = diagonalize(op, cluster_axis)?;
    checked_window(&diag, op, window)
}

pub fn checked_window(diag: &Diagonalization, op: &WeylOperator, window: &SpectralWindow) -> Result<EigenSystem> {
    if (window.hbar - op.grid().hbar).abs() > 1e-12 * op.grid().hbar {
        log::warn!("window ħ {} differs from grid ħ {}", window.hbar, op.grid().hbar);
    }
    let sys = diag.window(window);
    let ortho = sys.orthonormality_defect();
    if ortho > 1e-10 {
        return Err(Error::Solver(format!("eigenvectors not orthonormal: defect {ortho:e}")));
    }
    let res = sys.max_residual(op);
    if res > 1e-8 * diag.norm.max(1.0) {
        return Err(Error::Solver(format!("eigenpair residual {res:e} too large")));
    }
    Ok(sys)
}

/// Shell-volume Monte Carlo settings for [`weyl_count`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeylCountOptions {
    /// Shell half-width relative to `E`.
    pub width_fraction: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for WeylCountOptions {
    fn default() -> Self {
        WeylCountOptions {
            width_fraction: 0.05,
            samples: 4_000_000,
            seed: 1,
        }
    }
}

/// `N_I ≈ (2ω/π)·vol Ω_E/(2πħ)^{d−1}`. Returns `(prediction, std_error)`.
pub fn weyl_count(model: &HamiltonianModel, window: &SpectralWindow, opts: &WeylCountOptions) -> Result<(f64, f64)> {
    let width = opts.width_fraction * window.energy.abs().max(f64::MIN_POSITIVE);
    let (vol, se) = shell_volume(model, window.energy, width, opts.samples, opts.seed)?;
    let f = 2.0 * window.omega / std::f64::consts::PI
        / (2.0 * std::f64::consts::PI * window.hbar).powi(model.dim as i32 - 1);
    Ok((f * vol, f * se))
}

fn require_states(eig: &EigenSystem) -> Result<()> {
    if eig.count() == 0 {
        return Err(Error::contract("empty spectral window"));
    }
    Ok(())
}

/// `(average, |average − target|)` of `⟨ψ_k, Bψ_k⟩` over the window.
pub fn szego_average(eig: &EigenSystem, b: &WeylOperator, target: f64) -> Result<(f64, f64)> {
    require_states(eig)?;
    let ex = eig.expectations(b)?;
    let avg = ex.iter().sum::<f64>() / ex.len() as f64;
    Ok((avg, (avg - target).abs()))
}

/// `(1/N_I) Σ |⟨ψ_k, Bψ_k⟩ − target|²`.
pub fn s2_variance(eig: &EigenSystem, b: &WeylOperator, target: f64) -> Result<f64> {
    require_states(eig)?;
    let ex = eig.expectations(b)?;
    Ok(ex.iter().map(|v| (v - target).powi(2)).sum::<f64>() / ex.len() as f64)
}

/// `U(t) = exp(−iHt/ħ)` through a cached eigendecomposition of `H`.
#[derive(Clone, Debug)]
pub struct Propagator {
    diag: Diagonalization,
}

impl Propagator {
    pub fn new(h: &WeylOperator) -> Result<Self> {
        Ok(Propagator {
            diag: diagonalize(h, None)?,
        })
    }

    pub fn from_diagonalization(diag: Diagonalization) -> Self {
        Propagator { diag }
    }

    pub fn diagonalization(&self) -> &Diagonalization {
        &self.diag
    }

    /// `V†BV`.
    pub fn to_eigenbasis(&self, b: &WeylOperator) -> Result<Mat<C64>> {
        if *b.grid() != self.diag.grid {
            return Err(Error::contract("observable lives on a different grid"));
        }
        let v = &self.diag.vectors;
        Ok(v.adjoint() * (b.matrix() * v))
    }

    fn from_eigenbasis(&self, m: &Mat<C64>) -> Result<WeylOperator> {
        let v = &self.diag.vectors;
        WeylOperator::from_matrix(&self.diag.grid, v * (m * v.adjoint()))
    }

    /// `U†(t) B U(t)`.
    pub fn evolve(&self, b: &WeylOperator, t: f64) -> Result<WeylOperator> {
        if t == 0.0 {
            return Ok(b.clone());
        }
        let mut m = self.to_eigenbasis(b)?;
        self.phase_in_place(&mut m, t);
        self.from_eigenbasis(&m)
    }

    /// Multiplies `m_jk` by `e^{i(E_j − E_k)t/ħ}`.
    pub fn phase_in_place(&self, m: &mut Mat<C64>, t: f64) {
        let e = &self.diag.energies;
        let hb = self.diag.grid.hbar;
        let ph: Vec<C64> = e.iter().map(|&ej| C64::from_polar(1.0, ej * t / hb)).collect();
        for k in 0..m.ncols() {
            let pk = ph[k].conj();
            for j in 0..m.nrows() {
                m[(j, k)] *= ph[j] * pk;
            }
        }
    }

    /// `B_T = (1/T)∫₀^T U†(t)BU(t) dt`, integrated exactly in the eigenbasis.
    pub fn time_average(&self, b: &WeylOperator, big_t: f64) -> Result<WeylOperator> {
        if !(big_t > 0.0) {
            return Err(Error::contract("averaging time must be positive"));
        }
        let mut m = self.to_eigenbasis(b)?;
        let e = &self.diag.energies;
        let hb = self.diag.grid.hbar;
        for k in 0..m.ncols() {
            for j in 0..m.nrows() {
                let w = (e[j] - e[k]) * big_t / hb;
                let f = if w.abs() < 1e-8 {
                    C64::new(1.0, 0.0)
                } else {
                    (C64::from_polar(1.0, w) - 1.0) / C64::new(0.0, w)
                };
                m[(j, k)] *= f;
            }
        }
        let mut op = self.from_eigenbasis(&m)?.into_matrix();
        if b.is_hermitian() {
            symmetrize(&mut op);
        }
        WeylOperator::from_matrix(&self.diag.grid, op)
    }
}

pub fn heisenberg_evolve(h: &WeylOperator, b: &WeylOperator, t: f64) -> Result<WeylOperator> {
    if t == 0.0 {
        if *b.grid() != *h.grid() {
            return Err(Error::contract("operators live on different grids"));
        }
        return Ok(b.clone());
    }
    Propagator::new(h)?.evolve(b, t)
}

/// Default averaging time of the auxiliary operator.
pub const AUX_TIME: f64 = 20.0;

/// The auxiliary time average `B_T`; logs `‖B_T − B_{T/2}‖_F/‖B‖_F`.
pub fn aux_operator(prop: &Propagator, b: &WeylOperator, big_t: f64) -> Result<WeylOperator> {
    let bt = prop.time_average(b, big_t)?;
    let half = prop.time_average(b, 0.5 * big_t)?;
    let change = bt.sub(&half)?.frobenius_norm() / b.frobenius_norm().max(f64::MIN_POSITIVE);
    log::info!("aux operator T={big_t}: relative change from T/2 is {change:.3e}");
    Ok(bt)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgorovOptions {
    /// Compare the operators compressed to eigenstates of `Ĥ` with energy
    /// at most this value; `None` compares the full matrices.
    pub energy_cut: Option<f64>,
    pub tolerance: Tolerance,
}

impl Default for EgorovOptions {
    fn default() -> Self {
        EgorovOptions {
            energy_cut: Some(2.0),
            tolerance: Tolerance::new(1e-10),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgorovPoint {
    pub hbar: f64,
    pub points_per_axis: usize,
    pub error: f64,
    /// States kept by the energy cut.
    pub kept: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgorovCurve {
    pub t: f64,
    pub points: Vec<EgorovPoint>,
    /// Least-squares slope of `log e` against `log ħ`; NaN with fewer than
    /// two positive errors.
    pub slope: f64,
}

/// Least-squares slope of `log y` against `log x` over positive pairs.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn hermitian_norm(m: &Mat<C64>) -> Result<f64> {
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let mut h = m.clone();
    symmetrize(&mut h);
    let ev = h
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Solver(format!("{e:?}")))?;
    Ok(ev.iter().map(|v| v.abs()).fold(0.0, f64::max))
}

/// One Egorov comparison: `‖U†B̂U − Op(B(t))‖/‖B̂‖` in operator norm, both
/// compressed to the low-energy eigenspace when an energy cut is set.
pub fn egorov_error(
    model: &HamiltonianModel,
    b0: &MatrixSymbol,
    t: f64,
    grid: &GridSpec,
    opts: &EgorovOptions,
) -> Result<EgorovPoint> {
    if !b0.is_hermitian() {
        return Err(Error::contract("Egorov check needs a hermitian symbol"));
    }
    let h = build_pauli_operator(model, grid)?;
    let prop = Propagator::new(&h)?;
    let bh = weyl_quantize(b0, grid)?;
    let q = weyl_quantize(&egorov_symbol_with(model, b0, t, opts.tolerance), grid)?;
    let diag = prop.diagonalization();
    let keep: Vec<usize> = match opts.energy_cut {
        Some(cut) => (0..diag.energies.len()).filter(|&k| diag.energies[k] <= cut).collect(),
        None => (0..diag.energies.len()).collect(),
    };
    let n = diag.vectors.nrows();
    let vc = Mat::from_fn(n, keep.len(), |i, j| diag.vectors[(i, keep[j])]);
    let mut a = vc.adjoint() * (bh.matrix() * &vc);
    let qc = vc.adjoint() * (q.matrix() * &vc);
    let base = hermitian_norm(&a)?;
    let e: Vec<f64> = keep.iter().map(|&k| diag.energies[k]).collect();
    for k in 0..a.ncols() {
        for j in 0..a.nrows() {
            a[(j, k)] *= C64::from_polar(1.0, (e[j] - e[k]) * t / grid.hbar);
        }
    }
    let err = hermitian_norm(&(&a - &qc))?;
    Ok(EgorovPoint {
        hbar: grid.hbar,
        points_per_axis: grid.n,
        error: if base > 0.0 { err / base } else { err },
        kept: keep.len(),
    })
}

/// The Egorov error curve over a ladder of grids (one per `ħ`).
pub fn egorov_check(
    model: &HamiltonianModel,
    b0: &MatrixSymbol,
    t: f64,
    grids: &[GridSpec],
    opts: &EgorovOptions,
) -> Result<EgorovCurve> {
    if t.abs() > 2.0 {
        log::warn!("Egorov check at |t| = {} is outside the trusted window |t| <= 2", t.abs());
    }
    let points: Result<Vec<EgorovPoint>> = grids.iter().map(|g| egorov_error(model, b0, t, g, opts)).collect();
    let points = points?;
    let slope = loglog_slope(
        &points.iter().map(|p| p.hbar).collect::<Vec<_>>(),
        &points.iter().map(|p| p.error).collect::<Vec<_>>(),
    );
    Ok(EgorovCurve { t, points, slope })
}

/// Classical ensemble settings for [`counterexample_report`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErgodicSettings {
    pub n_base: usize,
    pub n_g: usize,
    pub schedule: Vec<f64>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleLevel {
    pub hbar: f64,
    /// `‖[σ̂_j, Ĥ]‖_F / ‖Ĥ‖_F`.
    pub commutator: f64,
    pub count: usize,
    /// Window states with `⟨σ̂_j⟩ > 0` and `< 0`.
    pub plus: usize,
    pub minus: usize,
    /// Smallest `|⟨σ̂_j⟩|` over the window.
    pub min_abs_spin: f64,
    pub s2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub axis: usize,
    pub levels: Vec<CounterexampleLevel>,
    pub classical: ErgodicityReport,
}

/// End-to-end check of the abelian model `H₁ = c·σ_j`: block structure,
/// the two spin families, `S₂(σ̂_j)` across the ladder and the classical
/// Birkhoff deviations.
pub fn counterexample_report(
    model: &HamiltonianModel,
    grids: &[GridSpec],
    energy: f64,
    omega: f64,
    ergodic: &ErgodicSettings,
) -> Result<CounterexampleReport> {
    let (axis, _) = model
        .coupling
        .abelian_form()
        .ok_or_else(|| Error::contract("counterexample needs an abelian coupling c·σ_j"))?;
    let mut levels = Vec::new();
    for grid in grids {
        let h = build_pauli_operator(model, grid)?;
        let s = WeylOperator::spin(grid, axis);
        let commutator = s.commutator(&h)?.frobenius_norm() / h.frobenius_norm();
        let window = SpectralWindow::new(energy, omega, grid.hbar)?;
        let eig = solve_window_with(&h, &window, Some(axis))?;
        let spins = eig.spin_expectations(axis);
        let s2 = if eig.count() > 0 { s2_variance(&eig, &s, 0.0)? } else { f64::NAN };
        levels.push(CounterexampleLevel {
            hbar: grid.hbar,
            commutator,
            count: eig.count(),
            plus: spins.iter().filter(|v| **v > 0.0).count(),
            minus: spins.iter().filter(|v| **v < 0.0).count(),
            min_abs_spin: spins.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min),
            s2,
        });
    }
    let sampler = ShellSampler::for_model(model, ergodic.seed);
    let ensemble = sample_ensemble(model, &sampler, ergodic.n_base, ergodic.n_g)?;
    let b0 = MatrixSymbol::pauli(axis);
    let classical = ergodicity_report(model, &b0, &ensemble, &ergodic.schedule, Some(0.0), &Tolerance::new(1e-10))?;
    Ok(CounterexampleReport {
        axis: axis.index() + 1,
        levels,
        classical,
    })
}
