//! SU(2) spin transport `ḋ + iH₁(Φ^t z)d = 0`, `d(0) = Id`, in unit-quaternion
//! form.

use std::io::Write;
use std::ops::Mul;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat2::{Mat2, PauliAxis, C64};
use crate::ode::{self, Tolerance};
use crate::phase_flow::{HamiltonianModel, PhasePoint, Trajectory};

/// `q0·Id − i(q1σ₁ + q2σ₂ + q3σ₃)` for a unit quaternion `q`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SU2Element {
    q: [f64; 4],
}

impl Default for SU2Element {
    fn default() -> Self {
        SU2Element::identity()
    }
}

impl SU2Element {
    pub fn identity() -> Self {
        SU2Element { q: [1.0, 0.0, 0.0, 0.0] }
    }

    /// Normalizes `q`; fails on a (near) zero or non-finite quaternion.
    pub fn from_quaternion(q: [f64; 4]) -> Result<Self> {
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(n.is_finite() && n > 1e-300) {
            return Err(Error::contract(format!("cannot normalize quaternion {q:?}")));
        }
        Ok(SU2Element { q: q.map(|v| v / n) })
    }

    /// `cos α·Id − i sin α·σ_axis`.
    pub fn rotation(axis: PauliAxis, alpha: f64) -> Self {
        let mut q = [alpha.cos(), 0.0, 0.0, 0.0];
        q[1 + axis.index()] = alpha.sin();
        SU2Element { q }
    }

    /// Recovers the quaternion of a special unitary matrix.
    pub fn from_matrix(m: &Mat2) -> Result<Self> {
        let u = *m * m.adjoint();
        if (u - Mat2::identity()).frobenius() > 1e-8 || (m.det() - C64::new(1.0, 0.0)).norm() > 1e-8 {
            return Err(Error::contract("matrix is not in SU(2)"));
        }
        let [[a, b], _] = m.0;
        SU2Element::from_quaternion([a.re, -b.im, -b.re, -a.im])
    }

    pub fn quaternion(&self) -> [f64; 4] {
        self.q
    }

    pub fn as_matrix(&self) -> Mat2 {
        let [q0, q1, q2, q3] = self.q;
        Mat2::new(
            C64::new(q0, -q3),
            C64::new(-q2, -q1),
            C64::new(q2, -q1),
            C64::new(q0, q3),
        )
    }

    pub fn inverse(&self) -> Self {
        let [q0, q1, q2, q3] = self.q;
        SU2Element { q: [q0, -q1, -q2, -q3] }
    }

    /// `‖d†d − Id‖_F`.
    pub fn unitarity_defect(&self) -> f64 {
        let m = self.as_matrix();
        (m.adjoint() * m - Mat2::identity()).frobenius()
    }

    /// Frobenius distance of the matrices.
    pub fn distance(&self, other: &SU2Element) -> f64 {
        (self.as_matrix() - other.as_matrix()).frobenius()
    }

    /// `g†Ag`.
    pub fn adjoint_action(&self, a: &Mat2) -> Mat2 {
        a.conj_by(&self.as_matrix())
    }
}

impl Mul for SU2Element {
    type Output = SU2Element;
    fn mul(self, b: SU2Element) -> SU2Element {
        let [a0, a1, a2, a3] = self.q;
        let [b0, b1, b2, b3] = b.q;
        let q = [
            a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
            a0 * b1 + b0 * a1 + a2 * b3 - a3 * b2,
            a0 * b2 + b0 * a2 + a3 * b1 - a1 * b3,
            a0 * b3 + b0 * a3 + a1 * b2 - a2 * b1,
        ];
        SU2Element::from_quaternion(q).expect("product of unit quaternions")
    }
}

/// `d(z, t+s) = d(Φ^t z, s)·d(z, t)`.
pub fn compose_transport(d_first: &SU2Element, d_second: &SU2Element) -> SU2Element {
    *d_second * *d_first
}

/// `dq/dt` for `H₁ = c·σ`.
#[inline]
pub(crate) fn quaternion_rhs(c: &[f64; 3], q: &[f64], dq: &mut [f64]) {
    dq[0] = -(c[0] * q[1] + c[1] * q[2] + c[2] * q[3]);
    dq[1] = q[0] * c[0] + c[1] * q[3] - c[2] * q[2];
    dq[2] = q[0] * c[1] + c[2] * q[1] - c[0] * q[3];
    dq[3] = q[0] * c[2] + c[0] * q[2] - c[1] * q[1];
}

pub(crate) fn normalize_slice(q: &mut [f64]) -> bool {
    let n2: f64 = q.iter().map(|v| v * v).sum();
    if (n2 - 1.0).abs() > 4.0 * f64::EPSILON {
        let n = n2.sqrt();
        q.iter_mut().for_each(|v| *v /= n);
        true
    } else {
        false
    }
}

/// Integrator for the combined state `[p, x, q, acc]`, where `acc` holds
/// `n_acc` extra quantities with derivative supplied by `acc_rhs(p, x, q, dacc)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn joint_integrate<A>(
    model: &HamiltonianModel,
    z0: &PhasePoint,
    q0: [f64; 4],
    t_end: f64,
    tol: &Tolerance,
    stops: &[f64],
    n_acc: usize,
    acc_rhs: A,
    observer: &mut ode::Observer<'_>,
) -> Result<Vec<f64>>
where
    A: Fn(&[f64], &[f64], &[f64], &mut [f64]) -> Result<()>,
{
    model.check_point(z0)?;
    let d = model.dim;
    let mut y0 = z0.to_state();
    y0.extend_from_slice(&q0);
    y0.extend(std::iter::repeat_n(0.0, n_acc));
    ode::dopri5(
        |_t, y, dy| {
            model.rhs(y, dy)?;
            let (p, x) = y[..2 * d].split_at(d);
            let c = model.coupling.vector_at(p, x)?;
            let q = &y[2 * d..2 * d + 4];
            quaternion_rhs(&c, q, &mut dy[2 * d..2 * d + 4]);
            if n_acc > 0 {
                acc_rhs(p, x, q, &mut dy[2 * d + 4..])?;
            }
            Ok(())
        },
        |y| normalize_slice(&mut y[2 * d..2 * d + 4]),
        0.0,
        &y0,
        t_end,
        tol,
        stops,
        observer,
    )
}

/// Flow and transport from `z` over time `t`: `(Φ^t z, d(z, t))`.
pub fn transport(
    model: &HamiltonianModel,
    z: &PhasePoint,
    t: f64,
    tol: &Tolerance,
) -> Result<(PhasePoint, SU2Element)> {
    let mut obs = |_t: f64, _y: &[f64], _dy: &[f64], _s: bool| Ok(());
    let y = joint_integrate(model, z, [1.0, 0.0, 0.0, 0.0], t, tol, &[], 0, |_, _, _, _| Ok(()), &mut obs)?;
    let d = model.dim;
    Ok((
        PhasePoint::from_state(&y, d),
        SU2Element::from_quaternion([y[2 * d], y[2 * d + 1], y[2 * d + 2], y[2 * d + 3]])?,
    ))
}

/// Transport elements sampled at the times of a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportPath {
    pub times: Vec<f64>,
    pub elements: Vec<SU2Element>,
}

impl TransportPath {
    /// The element at time `t`, which must be one of the sample times.
    pub fn at(&self, t: f64) -> Option<&SU2Element> {
        self.times.iter().position(|&s| s == t).map(|k| &self.elements[k])
    }

    /// Writes `t, q0..q3` and real/imaginary parts of the four matrix entries.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "t", "q0", "q1", "q2", "q3", "d11_re", "d11_im", "d12_re", "d12_im", "d21_re", "d21_im",
            "d22_re", "d22_im",
        ])?;
        for (t, g) in self.times.iter().zip(&self.elements) {
            let m = g.as_matrix();
            let mut row = vec![format!("{t:.17e}")];
            row.extend(g.q.iter().map(|v| format!("{v:.17e}")));
            for e in m.0.iter().flatten() {
                row.push(format!("{:.17e}", e.re));
                row.push(format!("{:.17e}", e.im));
            }
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// How the transport ODE obtains the base trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TransportMode {
    /// Re-integrates the base flow together with the spin state.
    Joint,
    /// Replays the trajectory's dense output.
    Interpolated,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportOptions {
    pub mode: TransportMode,
    pub tolerance: Tolerance,
}

impl Default for TransportOptions {
    fn default() -> Self {
        TransportOptions {
            mode: TransportMode::Joint,
            tolerance: Tolerance::new(1e-12),
        }
    }
}

pub fn integrate_spin_transport(model: &HamiltonianModel, traj: &Trajectory) -> Result<TransportPath> {
    integrate_spin_transport_with(model, traj, &TransportOptions::default())
}

pub fn integrate_spin_transport_with(
    model: &HamiltonianModel,
    traj: &Trajectory,
    opts: &TransportOptions,
) -> Result<TransportPath> {
    if traj.dim() != model.dim {
        return Err(Error::contract(format!(
            "trajectory of dimension {} for a {}-dimensional model",
            traj.dim(),
            model.dim
        )));
    }
    let d = model.dim;
    let backward = traj.t_final < 0.0;
    let mut stops = traj.times.clone();
    if backward {
        stops.reverse();
    }
    let mut out: Vec<(f64, SU2Element)> = Vec::with_capacity(stops.len());
    match opts.mode {
        TransportMode::Joint => {
            let scale = 1.0 + traj.start().to_state().iter().map(|v| v.abs()).fold(0.0, f64::max);
            let allowed = (1e-6f64).max(1e3 * traj.tolerance) * scale;
            let mut obs = |t: f64, y: &[f64], _dy: &[f64], at_stop: bool| -> Result<()> {
                if at_stop || (t == 0.0 && out.is_empty()) {
                    let k = out.len();
                    let reference = &traj.points[if backward { stops.len() - 1 - k } else { k }];
                    let base = PhasePoint::from_state(y, d);
                    let gap = base.distance(reference);
                    if gap > allowed {
                        return Err(Error::contract(format!(
                            "trajectory does not follow this model's flow (gap {gap:e} at t={t})"
                        )));
                    }
                    out.push((t, SU2Element::from_quaternion([y[2 * d], y[2 * d + 1], y[2 * d + 2], y[2 * d + 3]])?));
                }
                Ok(())
            };
            joint_integrate(
                model,
                traj.start(),
                [1.0, 0.0, 0.0, 0.0],
                traj.t_final,
                &opts.tolerance,
                &stops,
                0,
                |_, _, _, _| Ok(()),
                &mut obs,
            )?;
        }
        TransportMode::Interpolated => {
            let mut obs = |t: f64, y: &[f64], _dy: &[f64], at_stop: bool| -> Result<()> {
                if at_stop || (t == 0.0 && out.is_empty()) {
                    out.push((t, SU2Element::from_quaternion([y[0], y[1], y[2], y[3]])?));
                }
                Ok(())
            };
            ode::dopri5(
                |t, y, dy| {
                    let z = traj.state_at(t)?;
                    let (p, x) = z.split_at(d);
                    let c = model.coupling.vector_at(p, x)?;
                    quaternion_rhs(&c, y, dy);
                    Ok(())
                },
                normalize_slice,
                0.0,
                &[1.0, 0.0, 0.0, 0.0],
                traj.t_final,
                &opts.tolerance,
                &stops,
                &mut obs,
            )?;
        }
    }
    if out.len() != stops.len() {
        return Err(Error::contract("transport did not reach every trajectory sample"));
    }
    if backward {
        out.reverse();
    }
    let (times, elements) = out.into_iter().unzip();
    Ok(TransportPath { times, elements })
}

// 5-point Gauss–Legendre nodes and weights on [-1, 1].
const GL_NODES: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

/// `d(t) = cos α(t)·Id − i sin α(t)·σ_j` with `α(t) = ∫₀ᵗ C(Φ^s z) ds`,
/// by Gauss–Legendre quadrature on the trajectory's dense output.
pub fn abelian_closed_form(model: &HamiltonianModel, traj: &Trajectory) -> Result<TransportPath> {
    let (axis, c) = model
        .coupling
        .abelian_form()
        .ok_or_else(|| Error::contract("model coupling is not of the form C·σ_j"))?;
    let d = model.dim;
    let n = traj.times.len();
    let mut cum = vec![0.0; n];
    for k in 1..n {
        let (a, b) = (traj.times[k - 1], traj.times[k]);
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        let mut s = 0.0;
        for (u, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
            let z = traj.state_at(mid + half * u)?;
            let (p, x) = z.split_at(d);
            let v = c(p, x);
            if !v.is_finite() {
                return Err(Error::eval(p, x, "non-finite abelian coupling"));
            }
            s += w * v;
        }
        cum[k] = cum[k - 1] + half * s;
    }
    let zero = traj
        .times
        .iter()
        .position(|&t| t == 0.0)
        .ok_or_else(|| Error::contract("trajectory does not contain t = 0"))?;
    let base = cum[zero];
    Ok(TransportPath {
        times: traj.times.clone(),
        elements: cum.iter().map(|a| SU2Element::rotation(axis, a - base)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_flow::{integrate_flow, SpinCoupling, StepControl};
    use std::f64::consts::PI;

    fn harmonic(c: SpinCoupling) -> HamiltonianModel {
        HamiltonianModel::harmonic(1, 1.0, 0.5).unwrap().with_coupling(c)
    }

    fn z(p: f64, x: f64) -> PhasePoint {
        PhasePoint::new(vec![p], vec![x]).unwrap()
    }

    #[test]
    fn matrix_roundtrip_and_product() {
        let a = SU2Element::from_quaternion([0.3, -0.5, 0.2, 0.7]).unwrap();
        let b = SU2Element::from_quaternion([-0.1, 0.4, 0.9, -0.2]).unwrap();
        assert!((SU2Element::from_matrix(&a.as_matrix()).unwrap().quaternion()[1] - a.quaternion()[1]).abs() < 1e-14);
        assert!(((a * b).as_matrix() - a.as_matrix() * b.as_matrix()).frobenius() < 1e-14);
        assert!((a.as_matrix().det() - 1.0).norm() < 1e-14);
        assert!((a * a.inverse()).distance(&SU2Element::identity()) < 1e-14);
        let g = SU2Element::rotation(PauliAxis::X, PI / 3.0).as_matrix();
        let expect = Mat2::identity().scale_re(0.5) - Mat2::pauli(PauliAxis::X).scale(C64::new(0.0, 3f64.sqrt() / 2.0));
        assert!((g - expect).frobenius() < 1e-15);
    }

    #[test]
    fn zero_generator_stays_identity() {
        let m = harmonic(SpinCoupling::None);
        let tr = integrate_flow(&m, &z(0.3, 0.8), 4.0, StepControl::default()).unwrap();
        let path = integrate_spin_transport(&m, &tr).unwrap();
        assert_eq!(path.elements[0], SU2Element::identity());
        assert!(path.elements.iter().all(|g| g.distance(&SU2Element::identity()) < 1e-14));
    }

    #[test]
    fn constant_sigma3_half_turn() {
        let m = harmonic(SpinCoupling::constant(PauliAxis::Z, 1.0));
        let tr = integrate_flow(&m, &z(0.0, 1.0), PI, StepControl::default()).unwrap();
        let path = integrate_spin_transport(&m, &tr).unwrap();
        let last = path.elements.last().unwrap().as_matrix();
        assert!((last + Mat2::identity()).frobenius() < 1e-9);
    }

    #[test]
    fn quadratic_coupling_alpha_integral() {
        let m = harmonic(SpinCoupling::abelian(PauliAxis::Z, |_, x| x[0] * x[0]));
        let tr = integrate_flow(&m, &z(0.0, 1.0), PI, StepControl::default()).unwrap();
        let expect = Mat2::pauli(PauliAxis::Z).scale(C64::new(0.0, -1.0));
        let ode = integrate_spin_transport(&m, &tr).unwrap();
        assert!((ode.elements.last().unwrap().as_matrix() - expect).frobenius() < 1e-6);
        let closed = abelian_closed_form(&m, &tr).unwrap();
        assert!((closed.elements.last().unwrap().as_matrix() - expect).frobenius() < 1e-6);
    }

    #[test]
    fn closed_form_examples() {
        let m = harmonic(SpinCoupling::constant(PauliAxis::Z, 1.0));
        let tr = integrate_flow(&m, &z(0.0, 1.0), PI / 2.0, StepControl::default()).unwrap();
        let path = abelian_closed_form(&m, &tr).unwrap();
        assert_eq!(path.elements[0], SU2Element::identity());
        let expect = Mat2::pauli(PauliAxis::Z).scale(C64::new(0.0, -1.0));
        assert!((path.elements.last().unwrap().as_matrix() - expect).frobenius() < 1e-12);

        let nonab = harmonic(SpinCoupling::vector(|p, x| [x[0], 0.0, p[0]]));
        assert!(matches!(abelian_closed_form(&nonab, &tr), Err(Error::Contract(_))));
    }

    #[test]
    fn composition_examples() {
        let g = SU2Element::rotation(PauliAxis::Y, 0.7);
        assert_eq!(compose_transport(&SU2Element::identity(), &g), g);

        let m = harmonic(SpinCoupling::constant(PauliAxis::Z, 1.0));
        let tol = Tolerance::new(1e-12);
        let (z1, d1) = transport(&m, &z(0.0, 1.0), PI / 2.0, &tol).unwrap();
        let (_, d2) = transport(&m, &z1, PI / 2.0, &tol).unwrap();
        let both = compose_transport(&d1, &d2);
        assert!((both.as_matrix() + Mat2::identity()).frobenius() < 1e-9);

        let m = harmonic(SpinCoupling::vector(|p, x| [x[0], 0.0, p[0]]));
        let z0 = z(0.2, 0.9);
        let (z1, d1) = transport(&m, &z0, 1.0, &tol).unwrap();
        let (_, d2) = transport(&m, &z1, 1.0, &tol).unwrap();
        let (_, d12) = transport(&m, &z0, 2.0, &tol).unwrap();
        assert!(compose_transport(&d1, &d2).distance(&d12) < 1e-6);
    }

    #[test]
    fn mismatched_trajectory_is_rejected() {
        let m = harmonic(SpinCoupling::constant(PauliAxis::Z, 1.0));
        let quick = HamiltonianModel::new(
            "fast",
            1,
            |p, x| p[0] * p[0] + x[0] * x[0],
            |p, x, gp, gx| {
                gp[0] = 2.0 * p[0];
                gx[0] = 2.0 * x[0];
            },
            1.0,
            0.5,
            m.bbox.clone(),
        )
        .unwrap();
        let tr = integrate_flow(&quick, &z(0.0, 1.0), 2.0, StepControl::default()).unwrap();
        assert!(matches!(integrate_spin_transport(&m, &tr), Err(Error::Contract(_))));
        let m2 = HamiltonianModel::harmonic(2, 1.0, 0.5).unwrap();
        assert!(matches!(integrate_spin_transport(&m2, &tr), Err(Error::Contract(_))));
    }

    #[test]
    fn interpolated_mode_agrees_with_joint() {
        let m = harmonic(SpinCoupling::vector(|p, x| [x[0], 0.3, p[0]]));
        let tr = integrate_flow(&m, &z(0.1, 1.0), 3.0, StepControl::default()).unwrap();
        let joint = integrate_spin_transport(&m, &tr).unwrap();
        let opts = TransportOptions {
            mode: TransportMode::Interpolated,
            ..Default::default()
        };
        let replay = integrate_spin_transport_with(&m, &tr, &opts).unwrap();
        assert_eq!(joint.times, replay.times);
        assert!(joint.elements.last().unwrap().distance(replay.elements.last().unwrap()) < 1e-6);
    }

    #[test]
    fn backward_path_aligns_with_trajectory() {
        let m = harmonic(SpinCoupling::constant(PauliAxis::Z, 1.0));
        let tr = integrate_flow(&m, &z(0.0, 1.0), -1.0, StepControl::default()).unwrap();
        let path = integrate_spin_transport(&m, &tr).unwrap();
        assert_eq!(path.times, tr.times);
        assert_eq!(path.elements.last().unwrap(), &SU2Element::identity());
        assert!(path.elements[0].distance(&SU2Element::rotation(PauliAxis::Z, -1.0)) < 1e-9);
    }

    #[test]
    fn csv_columns() {
        let path = TransportPath {
            times: vec![0.0],
            elements: vec![SU2Element::identity()],
        };
        let mut buf = Vec::new();
        path.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap().split(',').count(), 13);
    }
}
