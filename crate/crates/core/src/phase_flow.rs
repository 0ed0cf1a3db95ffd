//! Hamiltonian models `H = H_{0,s}·Id + ħ·H₁` and the classical flow of the
//! scalar principal part.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat2::{Mat2, PauliAxis};
use crate::ode::{self, Tolerance};
use crate::symbol::MatrixSymbol;

pub type ScalarField = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
/// Writes `(∂_p H, ∂_x H)` into the two output slices.
pub type GradientField = Arc<dyn Fn(&[f64], &[f64], &mut [f64], &mut [f64]) + Send + Sync>;
pub type CouplingField = Arc<dyn Fn(&[f64], &[f64]) -> [f64; 3] + Send + Sync>;

/// A point `(p, x)` of `R^d × R^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub p: Vec<f64>,
    pub x: Vec<f64>,
}

impl PhasePoint {
    pub fn new(p: Vec<f64>, x: Vec<f64>) -> Result<Self> {
        let z = PhasePoint { p, x };
        z.check()?;
        Ok(z)
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    pub fn check(&self) -> Result<()> {
        if self.p.is_empty() || self.p.len() != self.x.len() {
            return Err(Error::contract(format!(
                "phase point needs equal nonzero dimensions, got {} and {}",
                self.p.len(),
                self.x.len()
            )));
        }
        if !self.p.iter().chain(&self.x).all(|v| v.is_finite()) {
            return Err(Error::eval(&self.p, &self.x, "non-finite phase point"));
        }
        Ok(())
    }

    /// Flattened state `[p_1..p_d, x_1..x_d]`.
    pub fn to_state(&self) -> Vec<f64> {
        let mut s = self.p.clone();
        s.extend_from_slice(&self.x);
        s
    }

    pub fn from_state(s: &[f64], d: usize) -> Self {
        PhasePoint {
            p: s[..d].to_vec(),
            x: s[d..2 * d].to_vec(),
        }
    }

    pub fn distance(&self, other: &PhasePoint) -> f64 {
        self.to_state()
            .iter()
            .zip(other.to_state())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Axis-aligned region of phase space declared to contain the energy shell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub p_lo: Vec<f64>,
    pub p_hi: Vec<f64>,
    pub x_lo: Vec<f64>,
    pub x_hi: Vec<f64>,
}

impl BoundingBox {
    pub fn symmetric(p_half: Vec<f64>, x_half: Vec<f64>) -> Self {
        BoundingBox {
            p_lo: p_half.iter().map(|v| -v).collect(),
            p_hi: p_half,
            x_lo: x_half.iter().map(|v| -v).collect(),
            x_hi: x_half,
        }
    }

    pub fn dim(&self) -> usize {
        self.p_lo.len()
    }

    /// Lower and upper corners in state order.
    pub fn corners(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = self.p_lo.clone();
        lo.extend_from_slice(&self.x_lo);
        let mut hi = self.p_hi.clone();
        hi.extend_from_slice(&self.x_hi);
        (lo, hi)
    }

    pub fn volume(&self) -> f64 {
        let (lo, hi) = self.corners();
        lo.iter().zip(&hi).map(|(a, b)| b - a).product()
    }

    pub fn contains(&self, p: &[f64], x: &[f64]) -> bool {
        let within = |v: &[f64], lo: &[f64], hi: &[f64]| {
            v.iter().zip(lo).zip(hi).all(|((v, l), h)| v >= l && v <= h)
        };
        within(p, &self.p_lo, &self.p_hi) && within(x, &self.x_lo, &self.x_hi)
    }

    pub(crate) fn check(&self, d: usize) -> Result<()> {
        let (lo, hi) = self.corners();
        if self.p_lo.len() != d || self.p_hi.len() != d || self.x_lo.len() != d || self.x_hi.len() != d {
            return Err(Error::contract("bounding box dimension mismatch"));
        }
        if !lo.iter().zip(&hi).all(|(a, b)| a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::contract("bounding box must have finite, ordered sides"));
        }
        Ok(())
    }
}

/// The traceless spin coupling `H₁ = C·σ`.
#[derive(Clone)]
pub enum SpinCoupling {
    None,
    /// `C(p,x)·σ_axis`.
    Abelian { axis: PauliAxis, c: ScalarField },
    /// `C(p,x)·σ` for a vector field `C`.
    Vector(CouplingField),
    /// A general matrix symbol; must be hermitian and traceless.
    Matrix(MatrixSymbol),
}

impl fmt::Debug for SpinCoupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpinCoupling::None => write!(f, "None"),
            SpinCoupling::Abelian { axis, .. } => write!(f, "Abelian({axis:?})"),
            SpinCoupling::Vector(_) => write!(f, "Vector"),
            SpinCoupling::Matrix(s) => write!(f, "Matrix({})", s.name()),
        }
    }
}

impl SpinCoupling {
    pub fn constant(axis: PauliAxis, c: f64) -> Self {
        SpinCoupling::Abelian {
            axis,
            c: Arc::new(move |_, _| c),
        }
    }

    pub fn abelian<F>(axis: PauliAxis, c: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        SpinCoupling::Abelian { axis, c: Arc::new(c) }
    }

    pub fn vector<F>(c: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> [f64; 3] + Send + Sync + 'static,
    {
        SpinCoupling::Vector(Arc::new(c))
    }

    /// Zeeman coupling `C = −g·B(x)` to an external magnetic field.
    pub fn magnetic<F>(g: f64, field: F) -> Self
    where
        F: Fn(&[f64]) -> [f64; 3] + Send + Sync + 'static,
    {
        SpinCoupling::vector(move |_, x| field(x).map(|b| -g * b))
    }

    /// Spin-orbit coupling `C = κ·φ'(|x|)/|x|·(x × p)` for a radial potential
    /// `φ`, with `x, p` embedded in `R³`.
    pub fn spin_orbit<F>(kappa: f64, dphi_dr: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        SpinCoupling::vector(move |p, x| {
            let emb = |v: &[f64]| {
                let mut e = [0.0; 3];
                for (k, val) in v.iter().take(3).enumerate() {
                    e[k] = *val;
                }
                e
            };
            let (x3, p3) = (emb(x), emb(p));
            let r = x3.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r == 0.0 {
                return [0.0; 3];
            }
            let s = kappa * dphi_dr(r) / r;
            [
                s * (x3[1] * p3[2] - x3[2] * p3[1]),
                s * (x3[2] * p3[0] - x3[0] * p3[2]),
                s * (x3[0] * p3[1] - x3[1] * p3[0]),
            ]
        })
    }

    pub fn is_none(&self) -> bool {
        matches!(self, SpinCoupling::None)
    }

    /// The vector `C(p, x)` with `H₁ = C·σ`.
    pub fn vector_at(&self, p: &[f64], x: &[f64]) -> Result<[f64; 3]> {
        let c = match self {
            SpinCoupling::None => [0.0; 3],
            SpinCoupling::Abelian { axis, c } => {
                let mut v = [0.0; 3];
                v[axis.index()] = c(p, x);
                v
            }
            SpinCoupling::Vector(f) => f(p, x),
            SpinCoupling::Matrix(s) => {
                let m = s.eval(p, x)?;
                let (a0, a) = m.pauli_coords();
                let defect = m.hermiticity_defect();
                if a0.norm() > 1e-12 || defect > 1e-12 {
                    return Err(Error::contract(format!(
                        "spin coupling must be hermitian and traceless (tr/2 = {a0}, defect {defect:e})"
                    )));
                }
                [a[0].re, a[1].re, a[2].re]
            }
        };
        if !c.iter().all(|v| v.is_finite()) {
            return Err(Error::eval(p, x, "non-finite spin coupling"));
        }
        Ok(c)
    }

    /// `H₁` as a matrix symbol.
    pub fn symbol(&self) -> MatrixSymbol {
        match self {
            SpinCoupling::Matrix(s) => s.clone(),
            SpinCoupling::None => MatrixSymbol::zero().with_name("H1"),
            _ => {
                let me = self.clone();
                MatrixSymbol::fallible("H1", true, move |p, x| {
                    Ok(Mat2::from_pauli(0.0, me.vector_at(p, x)?))
                })
            }
        }
    }

    /// `Some((axis, C))` when `H₁ = C·σ_axis` was declared.
    pub fn abelian_form(&self) -> Option<(PauliAxis, ScalarField)> {
        match self {
            SpinCoupling::Abelian { axis, c } => Some((*axis, c.clone())),
            _ => None,
        }
    }
}

/// A Pauli-type model: scalar principal symbol, spin coupling, energy band
/// and a bounding box for the shell.
#[derive(Clone)]
pub struct HamiltonianModel {
    pub name: String,
    pub dim: usize,
    pub h0s: ScalarField,
    pub grad_h0s: GradientField,
    pub coupling: SpinCoupling,
    pub energy: f64,
    pub epsilon: f64,
    pub bbox: BoundingBox,
    /// Set when `H_{0,s} = |p|²/2 + V(x)`, enabling the symplectic integrator.
    pub separable: bool,
}

impl fmt::Debug for HamiltonianModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HamiltonianModel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("coupling", &self.coupling)
            .field("energy", &self.energy)
            .field("epsilon", &self.epsilon)
            .field("bbox", &self.bbox)
            .field("separable", &self.separable)
            .finish()
    }
}

impl HamiltonianModel {
    pub fn new<H, G>(
        name: impl Into<String>,
        dim: usize,
        h0s: H,
        grad: G,
        energy: f64,
        epsilon: f64,
        bbox: BoundingBox,
    ) -> Result<Self>
    where
        H: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64], &[f64], &mut [f64], &mut [f64]) + Send + Sync + 'static,
    {
        if dim == 0 {
            return Err(Error::contract("model dimension must be at least 1"));
        }
        if !(epsilon > 0.0) || !energy.is_finite() {
            return Err(Error::contract("energy must be finite and epsilon positive"));
        }
        bbox.check(dim)?;
        Ok(HamiltonianModel {
            name: name.into(),
            dim,
            h0s: Arc::new(h0s),
            grad_h0s: Arc::new(grad),
            coupling: SpinCoupling::None,
            energy,
            epsilon,
            bbox,
            separable: false,
        })
    }

    /// `H_{0,s} = (|p|² + |x|²)/2`.
    pub fn harmonic(dim: usize, energy: f64, epsilon: f64) -> Result<Self> {
        let r = 1.25 * (2.0 * (energy + epsilon)).sqrt();
        let mut m = HamiltonianModel::new(
            format!("harmonic{dim}d"),
            dim,
            |p, x| 0.5 * (p.iter().map(|v| v * v).sum::<f64>() + x.iter().map(|v| v * v).sum::<f64>()),
            |p, x, gp, gx| {
                gp.copy_from_slice(p);
                gx.copy_from_slice(x);
            },
            energy,
            epsilon,
            BoundingBox::symmetric(vec![r; dim], vec![r; dim]),
        )?;
        m.separable = true;
        Ok(m)
    }

    /// `H_{0,s} = |p|²/2 + x₁²x₂²/2 + β(x₁⁴ + x₂⁴)/4` in d = 2.
    pub fn quartic(beta: f64, energy: f64, epsilon: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::contract("quartic model needs beta > 0 for a compact shell"));
        }
        let top = energy + epsilon;
        let ph = 1.1 * (2.0 * top).sqrt();
        let xh = 1.05 * (4.0 * top / beta).powf(0.25);
        let mut m = HamiltonianModel::new(
            format!("quartic(beta={beta})"),
            2,
            move |p, x| {
                0.5 * (p[0] * p[0] + p[1] * p[1])
                    + 0.5 * x[0] * x[0] * x[1] * x[1]
                    + 0.25 * beta * (x[0].powi(4) + x[1].powi(4))
            },
            move |p, x, gp, gx| {
                gp.copy_from_slice(p);
                gx[0] = x[0] * x[1] * x[1] + beta * x[0].powi(3);
                gx[1] = x[0] * x[0] * x[1] + beta * x[1].powi(3);
            },
            energy,
            epsilon,
            BoundingBox::symmetric(vec![ph; 2], vec![xh; 2]),
        )?;
        m.separable = true;
        Ok(m)
    }

    pub fn with_coupling(mut self, coupling: SpinCoupling) -> Self {
        self.coupling = coupling;
        self
    }

    pub fn with_bbox(mut self, bbox: BoundingBox) -> Result<Self> {
        bbox.check(self.dim)?;
        self.bbox = bbox;
        Ok(self)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn energy_at(&self, z: &PhasePoint) -> f64 {
        (self.h0s)(&z.p, &z.x)
    }

    /// `H₁` as a matrix symbol.
    pub fn h1(&self) -> MatrixSymbol {
        self.coupling.symbol()
    }

    /// The full symbol `H_{0,s}·Id + ħ·H₁`.
    pub fn full_symbol(&self, hbar: f64) -> MatrixSymbol {
        let h0 = self.h0s.clone();
        let c = self.coupling.clone();
        MatrixSymbol::fallible(format!("H[{}]", self.name), true, move |p, x| {
            let v = c.vector_at(p, x)?.map(|k| hbar * k);
            Ok(Mat2::from_pauli(h0(p, x), v))
        })
    }

    pub(crate) fn check_point(&self, z: &PhasePoint) -> Result<()> {
        z.check()?;
        if z.dim() != self.dim {
            return Err(Error::contract(format!(
                "point of dimension {} for a {}-dimensional model",
                z.dim(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Right-hand side of Hamilton's equations on a flat state.
    pub(crate) fn rhs(&self, s: &[f64], ds: &mut [f64]) -> Result<()> {
        let d = self.dim;
        let (p, x) = s[..2 * d].split_at(d);
        let (dp, dx) = ds[..2 * d].split_at_mut(d);
        (self.grad_h0s)(p, x, dx, dp);
        for v in dp.iter_mut() {
            *v = -*v;
        }
        if !dp.iter().chain(dx.iter()).all(|v| v.is_finite()) {
            return Err(Error::eval(p, x, "non-finite gradient of H_{0,s}"));
        }
        Ok(())
    }

    /// Checks the structural conditions on `H_{0,s}` and `H₁` over a probe grid
    /// of `per_axis` nodes per phase-space coordinate inside the bounding box.
    pub fn validate(&self, per_axis: usize) -> Result<ValidationReport> {
        if per_axis < 3 {
            return Err(Error::contract("probe grid needs at least 3 nodes per axis"));
        }
        let d = self.dim;
        let (lo, hi) = self.bbox.corners();
        let total = per_axis.checked_pow(2 * d as u32).filter(|&n| n <= 20_000_000).ok_or_else(|| {
            Error::contract("probe grid too large")
        })?;
        let mut rep = ValidationReport {
            min_energy: f64::INFINITY,
            boundary_min_energy: f64::INFINITY,
            band_points: 0,
            band_points_on_boundary: 0,
            min_gradient_in_band: f64::INFINITY,
            ellipticity_constant: f64::INFINITY,
            h1_hermiticity_defect: 0.0,
            h1_trace: 0.0,
            violations: Vec::new(),
        };
        let h1 = self.h1();
        let mut idx = vec![0usize; 2 * d];
        let mut s = vec![0.0; 2 * d];
        let mut gp = vec![0.0; d];
        let mut gx = vec![0.0; d];
        for n in 0..total {
            let mut r = n;
            let mut on_boundary = false;
            for k in 0..2 * d {
                idx[k] = r % per_axis;
                r /= per_axis;
                on_boundary |= idx[k] == 0 || idx[k] == per_axis - 1;
                s[k] = lo[k] + (hi[k] - lo[k]) * idx[k] as f64 / (per_axis - 1) as f64;
            }
            let (p, x) = s.split_at(d);
            let e = (self.h0s)(p, x);
            if !e.is_finite() {
                return Err(Error::eval(p, x, "non-finite H_{0,s}"));
            }
            rep.min_energy = rep.min_energy.min(e);
            if on_boundary {
                rep.boundary_min_energy = rep.boundary_min_energy.min(e);
            }
            let r2: f64 = s.iter().map(|v| v * v).sum();
            rep.ellipticity_constant = rep.ellipticity_constant.min((e * e + 1.0).sqrt() / (1.0 + r2));
            if (e - self.energy).abs() <= self.epsilon {
                rep.band_points += 1;
                if on_boundary {
                    rep.band_points_on_boundary += 1;
                }
                (self.grad_h0s)(p, x, &mut gp, &mut gx);
                let g = gp.iter().chain(&gx).map(|v| v * v).sum::<f64>().sqrt();
                rep.min_gradient_in_band = rep.min_gradient_in_band.min(g);
            }
            let m = h1.eval(p, x)?;
            rep.h1_hermiticity_defect = rep.h1_hermiticity_defect.max(m.hermiticity_defect());
            rep.h1_trace = rep.h1_trace.max(m.trace().norm());
        }
        if rep.boundary_min_energy <= rep.min_energy {
            rep.violations.push(format!(
                "bounded below: minimum {} of H_0s sits on the box boundary",
                rep.min_energy
            ));
        }
        if rep.band_points_on_boundary > 0 {
            rep.violations.push(format!(
                "compact shell: {} band points touch the bounding box",
                rep.band_points_on_boundary
            ));
        }
        if rep.band_points > 0 && rep.min_gradient_in_band < 1e-6 {
            rep.violations.push(format!(
                "critical value: |grad H_0s| = {:e} inside the energy band",
                rep.min_gradient_in_band
            ));
        }
        if rep.ellipticity_constant < 1e-6 {
            rep.violations.push(format!(
                "ellipticity: |H_0s + i|/(1+|z|^2) drops to {:e}",
                rep.ellipticity_constant
            ));
        }
        if rep.h1_hermiticity_defect > 1e-12 {
            rep.violations.push(format!("H1 not hermitian (defect {:e})", rep.h1_hermiticity_defect));
        }
        if rep.h1_trace > 1e-12 {
            rep.violations.push(format!("H1 not traceless (|tr| up to {:e})", rep.h1_trace));
        }
        Ok(rep)
    }
}

/// Outcome of [`HamiltonianModel::validate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub min_energy: f64,
    pub boundary_min_energy: f64,
    pub band_points: usize,
    pub band_points_on_boundary: usize,
    pub min_gradient_in_band: f64,
    pub ellipticity_constant: f64,
    pub h1_hermiticity_defect: f64,
    pub h1_trace: f64,
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// `(dp/dt, dx/dt) = (−∂_x H_{0,s}, ∂_p H_{0,s})`.
pub fn vector_field(model: &HamiltonianModel, z: &PhasePoint) -> Result<(Vec<f64>, Vec<f64>)> {
    model.check_point(z)?;
    let mut ds = vec![0.0; 2 * model.dim];
    model.rhs(&z.to_state(), &mut ds)?;
    let dx = ds.split_off(model.dim);
    Ok((ds, dx))
}

/// How [`integrate_flow`] advances the state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum StepControl {
    /// Adaptive Dormand–Prince 5(4) with dense output.
    Adaptive(Tolerance),
    /// Fixed-step fourth-order Forest–Ruth; separable models only.
    Symplectic { dt: f64 },
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl::Adaptive(Tolerance::default())
    }
}

/// Samples of `Φ^t(z₀)` with derivatives for Hermite dense output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<PhasePoint>,
    pub velocities: Vec<Vec<f64>>,
    pub energy_drift: f64,
    /// The tolerance the drift is certified against.
    pub tolerance: f64,
    pub t_final: f64,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    /// The point at t = 0.
    pub fn start(&self) -> &PhasePoint {
        if self.t_final >= 0.0 {
            &self.points[0]
        } else {
            self.points.last().unwrap()
        }
    }

    /// The point at `t_final`.
    pub fn end(&self) -> &PhasePoint {
        if self.t_final >= 0.0 {
            self.points.last().unwrap()
        } else {
            &self.points[0]
        }
    }

    /// Cubic Hermite interpolation of the state at time `t`.
    pub fn state_at(&self, t: f64) -> Result<Vec<f64>> {
        let (t0, t1) = (self.times[0], *self.times.last().unwrap());
        if !(t >= t0 - 1e-12 && t <= t1 + 1e-12) {
            return Err(Error::contract(format!("t={t} outside trajectory span [{t0}, {t1}]")));
        }
        if self.times.len() == 1 {
            return Ok(self.points[0].to_state());
        }
        let k = match self.times.partition_point(|&s| s <= t) {
            0 => 0,
            i => (i - 1).min(self.times.len() - 2),
        };
        let (ta, tb) = (self.times[k], self.times[k + 1]);
        let h = tb - ta;
        let u = ((t - ta) / h).clamp(0.0, 1.0);
        let (ya, yb) = (self.points[k].to_state(), self.points[k + 1].to_state());
        let (fa, fb) = (&self.velocities[k], &self.velocities[k + 1]);
        let h00 = (1.0 + 2.0 * u) * (1.0 - u) * (1.0 - u);
        let h10 = u * (1.0 - u) * (1.0 - u);
        let h01 = u * u * (3.0 - 2.0 * u);
        let h11 = u * u * (u - 1.0);
        Ok((0..ya.len())
            .map(|i| h00 * ya[i] + h10 * h * fa[i] + h01 * yb[i] + h11 * h * fb[i])
            .collect())
    }

    pub fn point_at(&self, t: f64) -> Result<PhasePoint> {
        Ok(PhasePoint::from_state(&self.state_at(t)?, self.dim()))
    }

    /// Writes `t, p_1..p_d, x_1..x_d, energy`.
    pub fn write_csv<W: Write>(&self, model: &HamiltonianModel, w: W) -> Result<()> {
        let d = self.dim();
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|k| format!("p_{k}")));
        header.extend((1..=d).map(|k| format!("x_{k}")));
        header.push("energy".into());
        wr.write_record(&header)?;
        for (t, z) in self.times.iter().zip(&self.points) {
            let mut row = vec![format!("{t:.17e}")];
            row.extend(z.p.iter().chain(&z.x).map(|v| format!("{v:.17e}")));
            row.push(format!("{:.17e}", model.energy_at(z)));
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Integrates Hamilton's equations from `z0` over `[0, t_final]` (or
/// `[t_final, 0]`). Adaptive runs are repeated at tighter internal tolerance
/// until the energy drift is within `tol·max(1, |H(z0)|)`.
pub fn integrate_flow(
    model: &HamiltonianModel,
    z0: &PhasePoint,
    t_final: f64,
    control: StepControl,
) -> Result<Trajectory> {
    model.check_point(z0)?;
    if !t_final.is_finite() {
        return Err(Error::contract("t_final must be finite"));
    }
    let e0 = model.energy_at(z0);
    if !e0.is_finite() {
        return Err(Error::eval(&z0.p, &z0.x, "non-finite H_{0,s}"));
    }
    match control {
        StepControl::Adaptive(tol) => {
            tol.validate()?;
            let bound = tol.rtol.max(tol.atol) * e0.abs().max(1.0);
            let mut inner = tol;
            let mut last = None;
            for _ in 0..4 {
                let mut traj = adaptive_flow(model, z0, t_final, &inner)?;
                traj.tolerance = bound;
                if traj.energy_drift <= bound {
                    return Ok(traj);
                }
                inner.rtol /= 10.0;
                inner.atol /= 10.0;
                last = Some(traj);
            }
            let traj = last.unwrap();
            Err(Error::Divergence {
                t: t_final,
                reason: format!(
                    "energy drift {:e} exceeds tolerance {bound:e} after refinement",
                    traj.energy_drift
                ),
            })
        }
        StepControl::Symplectic { dt } => symplectic_flow(model, z0, t_final, dt),
    }
}

fn adaptive_flow(
    model: &HamiltonianModel,
    z0: &PhasePoint,
    t_final: f64,
    tol: &Tolerance,
) -> Result<Trajectory> {
    let d = model.dim;
    let e0 = model.energy_at(z0);
    let mut times = Vec::new();
    let mut points = Vec::new();
    let mut vels = Vec::new();
    let mut drift = 0.0f64;
    let mut obs = |t: f64, y: &[f64], dy: &[f64], _stop: bool| -> Result<()> {
        let z = PhasePoint::from_state(y, d);
        drift = drift.max((model.energy_at(&z) - e0).abs());
        times.push(t);
        points.push(z);
        vels.push(dy.to_vec());
        Ok(())
    };
    ode::dopri5(
        |_t, y, dy| model.rhs(y, dy),
        |_y| false,
        0.0,
        &z0.to_state(),
        t_final,
        tol,
        &[],
        &mut obs,
    )?;
    finish(times, points, vels, drift, tol.rtol, t_final)
}

fn finish(
    mut times: Vec<f64>,
    mut points: Vec<PhasePoint>,
    mut vels: Vec<Vec<f64>>,
    drift: f64,
    tolerance: f64,
    t_final: f64,
) -> Result<Trajectory> {
    if t_final < 0.0 {
        times.reverse();
        points.reverse();
        vels.reverse();
    }
    Ok(Trajectory {
        times,
        points,
        velocities: vels,
        energy_drift: drift,
        tolerance,
        t_final,
    })
}

fn symplectic_flow(model: &HamiltonianModel, z0: &PhasePoint, t_final: f64, dt: f64) -> Result<Trajectory> {
    if !model.separable {
        return Err(Error::contract("symplectic stepping needs a separable model"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::contract("symplectic step must be positive"));
    }
    let d = model.dim;
    let e0 = model.energy_at(z0);
    let n = ((t_final.abs() / dt).ceil() as usize).max(if t_final == 0.0 { 0 } else { 1 });
    let h = if n == 0 { 0.0 } else { t_final / n as f64 };
    let (c, dk) = ode::forest_ruth();
    let mut s = z0.to_state();
    let mut ds = vec![0.0; 2 * d];
    let mut times = Vec::with_capacity(n + 1);
    let mut points = Vec::with_capacity(n + 1);
    let mut vels = Vec::with_capacity(n + 1);
    let mut drift = 0.0f64;
    model.rhs(&s, &mut ds)?;
    times.push(0.0);
    points.push(z0.clone());
    vels.push(ds.clone());
    for step in 1..=n {
        for stage in 0..4 {
            for i in 0..d {
                s[d + i] += c[stage] * h * s[i];
            }
            if stage < 3 {
                model.rhs(&s, &mut ds)?;
                for i in 0..d {
                    s[i] += dk[stage] * h * ds[i];
                }
            }
        }
        model.rhs(&s, &mut ds)?;
        let z = PhasePoint::from_state(&s, d);
        drift = drift.max((model.energy_at(&z) - e0).abs());
        times.push(if step == n { t_final } else { step as f64 * h });
        points.push(z);
        vels.push(ds.clone());
    }
    let tol = h.abs().powi(4).max(f64::EPSILON);
    let mut traj = finish(times, points, vels, drift, tol, t_final)?;
    // fixed-step schemes certify nothing a priori; report the observed drift
    traj.tolerance = traj.energy_drift.max(tol);
    Ok(traj)
}
