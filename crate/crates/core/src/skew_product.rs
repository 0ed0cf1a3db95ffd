//! The SU(2) extension `Y^t((p,x), g) = (Φ^t(p,x), d(p,x,t)·g)` of the
//! Hamiltonian flow, shell and Haar sampling, and Birkhoff averages.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat2::{Mat2, PauliAxis, C64};
use crate::ode::Tolerance;
use crate::phase_flow::{BoundingBox, HamiltonianModel, PhasePoint};
use crate::spin_transport::{joint_integrate, transport, SU2Element};
use crate::symbol::MatrixSymbol;

/// A point of `Ω_E × SU(2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtendedPoint {
    pub base: PhasePoint,
    pub g: SU2Element,
}

impl ExtendedPoint {
    /// Requires `|H_{0,s}(base) − E| ≤ shell_tol`.
    pub fn new(model: &HamiltonianModel, base: PhasePoint, g: SU2Element, shell_tol: f64) -> Result<Self> {
        model.check_point(&base)?;
        let e = model.energy_at(&base);
        if (e - model.energy).abs() > shell_tol {
            return Err(Error::contract(format!(
                "base point has energy {e}, off the shell E={} by more than {shell_tol:e}",
                model.energy
            )));
        }
        Ok(ExtendedPoint { base, g })
    }
}

pub fn evolve_extended(
    model: &HamiltonianModel,
    pt: &ExtendedPoint,
    t: f64,
    tol: &Tolerance,
) -> Result<ExtendedPoint> {
    if t == 0.0 {
        return Ok(pt.clone());
    }
    let (base, d) = transport(model, &pt.base, t, tol)?;
    Ok(ExtendedPoint { base, g: d * pt.g })
}

/// Rejection sampler for the thickened shell `{|H_{0,s} − E| < width}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShellSampler {
    pub energy: f64,
    pub width: f64,
    pub bbox: BoundingBox,
    pub seed: u64,
    /// Proposals allowed per accepted point before giving up.
    pub max_proposals: usize,
}

impl ShellSampler {
    /// Shell of half-width `1e-3·E` in the model's box.
    pub fn for_model(model: &HamiltonianModel, seed: u64) -> Self {
        ShellSampler {
            energy: model.energy,
            width: 1e-3 * model.energy.abs().max(f64::MIN_POSITIVE),
            bbox: model.bbox.clone(),
            seed,
            max_proposals: 10_000_000,
        }
    }

    pub fn with_width(mut self, width: f64) -> Self {
        self.width = width;
        self
    }

    fn check(&self, model: &HamiltonianModel) -> Result<()> {
        if !(self.width > 0.0) {
            return Err(Error::Sampler("shell width must be positive".into()));
        }
        if self.max_proposals == 0 {
            return Err(Error::Sampler("proposal budget must be positive".into()));
        }
        self.bbox.check(model.dim)
    }

    fn draw(&self, model: &HamiltonianModel, index: u64) -> Result<(PhasePoint, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        let (lo, hi) = self.bbox.corners();
        let d = model.dim;
        let mut s = vec![0.0; 2 * d];
        for tries in 1..=self.max_proposals {
            for k in 0..2 * d {
                s[k] = rng.random_range(lo[k]..hi[k]);
            }
            let (p, x) = s.split_at(d);
            if ((model.h0s)(p, x) - self.energy).abs() < self.width {
                return Ok((PhasePoint::from_state(&s, d), tries));
            }
        }
        Err(Error::Sampler(format!(
            "no shell point in {} proposals (width {:e}); widen the shell or shrink the box",
            self.max_proposals, self.width
        )))
    }
}

/// `n` points uniform in the thickened shell; point `i` depends only on
/// `(seed, i)`.
pub fn sample_liouville(model: &HamiltonianModel, sampler: &ShellSampler, n: usize) -> Result<Vec<PhasePoint>> {
    sampler.check(model)?;
    let out: Result<Vec<(PhasePoint, usize)>> =
        (0..n as u64).into_par_iter().map(|i| sampler.draw(model, i)).collect();
    let out = out?;
    let proposals: usize = out.iter().map(|(_, k)| k).sum();
    log::debug!(
        "shell sampler accepted {n} of {proposals} proposals ({:.3e})",
        n as f64 / proposals.max(1) as f64
    );
    Ok(out.into_iter().map(|(z, _)| z).collect())
}

/// I.i.d. Haar elements from normalized Gaussian quaternions.
pub fn sample_haar(n: usize, seed: u64) -> Result<Vec<SU2Element>> {
    if n == 0 {
        return Err(Error::contract("need at least one Haar sample"));
    }
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
            rng.set_stream(i);
            loop {
                let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
                if q.iter().map(|v| v * v).sum::<f64>() > 1e-12 {
                    return SU2Element::from_quaternion(q);
                }
            }
        })
        .collect()
}

/// The SO(3) image `φ(h)_{kl} = ½ tr(σ_k h† σ_l h)`.
pub fn so3_image(h: &SU2Element) -> [[f64; 3]; 3] {
    let mut r = [[0.0; 3]; 3];
    for l in 0..3 {
        let conj = h.adjoint_action(&Mat2::pauli(PauliAxis::ALL[l]));
        for k in 0..3 {
            r[k][l] = 0.5 * (Mat2::pauli(PauliAxis::ALL[k]) * conj).trace().re;
        }
    }
    r
}

/// `∫ h†Ah dμ_H(h) = (tr A / 2)·Id`.
pub fn haar_adjoint_average(a: &Mat2) -> Result<Mat2> {
    if a.hermiticity_defect() > 1e-12 * a.frobenius().max(1.0) {
        return Err(Error::contract("Haar adjoint average needs a hermitian matrix"));
    }
    Ok(Mat2::identity().scale_re(0.5 * a.trace().re))
}

/// `d†Md` for the matrix of the normalized quaternion `q/|q|`.
#[inline]
fn conj_by_quaternion(m: &Mat2, q: &[f64]) -> Mat2 {
    let n2: f64 = q.iter().map(|v| v * v).sum();
    let d = Mat2::new(
        C64::new(q[0], -q[3]),
        C64::new(-q[2], -q[1]),
        C64::new(q[2], -q[1]),
        C64::new(q[0], q[3]),
    );
    m.conj_by(&d).scale_re(1.0 / n2)
}

/// Time averages `(1/T)∫₀ᵀ g†(t)B₀(Φ^t z)g(t) dt` with `g(t) = d(z,t)·g₀`
/// for every `T` in `schedule` and every `g₀`, from one joint integration.
/// Result is indexed `[T][g₀]`.
pub fn birkhoff_schedule(
    model: &HamiltonianModel,
    b0: &MatrixSymbol,
    base: &PhasePoint,
    g0s: &[SU2Element],
    schedule: &[f64],
    tol: &Tolerance,
) -> Result<Vec<Vec<Mat2>>> {
    if schedule.is_empty() || schedule.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::contract("Birkhoff times must be positive and finite"));
    }
    let mut sorted = schedule.to_vec();
    sorted.sort_by(f64::total_cmp);
    let d = model.dim;
    let mut snapshots: Vec<(f64, Mat2)> = Vec::new();
    let mut obs = |t: f64, y: &[f64], _dy: &[f64], at_stop: bool| -> Result<()> {
        if at_stop {
            let a = &y[2 * d + 4..];
            let acc = Mat2::new(
                C64::new(a[0], a[1]),
                C64::new(a[2], a[3]),
                C64::new(a[4], a[5]),
                C64::new(a[6], a[7]),
            );
            snapshots.push((t, acc));
        }
        Ok(())
    };
    joint_integrate(
        model,
        base,
        [1.0, 0.0, 0.0, 0.0],
        *sorted.last().unwrap(),
        tol,
        &sorted,
        8,
        |p, x, q, dacc| {
            let m = conj_by_quaternion(&b0.eval(p, x)?, q);
            for (k, v) in m.0.iter().flatten().enumerate() {
                dacc[2 * k] = v.re;
                dacc[2 * k + 1] = v.im;
            }
            Ok(())
        },
        &mut obs,
    )?;
    schedule
        .iter()
        .map(|&t| {
            let (_, acc) = snapshots
                .iter()
                .find(|(s, _)| *s == t)
                .ok_or_else(|| Error::contract("integration skipped a Birkhoff time"))?;
            let avg = acc.scale_re(1.0 / t);
            Ok(g0s
                .iter()
                .map(|g| {
                    let m = avg.conj_by(&g.as_matrix());
                    if b0.is_hermitian() {
                        (m + m.adjoint()).scale_re(0.5)
                    } else {
                        m
                    }
                })
                .collect())
        })
        .collect()
}

/// `(1/T)∫₀ᵀ g†(t) B₀(Φ^t base) g(t) dt`. `dt` caps the integrator step.
pub fn birkhoff_average(
    model: &HamiltonianModel,
    b0: &MatrixSymbol,
    start: &ExtendedPoint,
    t: f64,
    dt: f64,
) -> Result<Mat2> {
    let tol = Tolerance::new(1e-10).with_max_step(dt);
    Ok(birkhoff_schedule(model, b0, &start.base, &[start.g], &[t], &tol)?[0][0])
}

/// Monte Carlo estimate of `μ_E(B₀)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LiouvilleEstimate {
    pub mean: Mat2,
    /// Largest standard error over the real and imaginary parts of the entries.
    pub std_error: f64,
    pub samples: usize,
}

pub fn liouville_average(
    model: &HamiltonianModel,
    b0: &MatrixSymbol,
    sampler: &ShellSampler,
    n: usize,
) -> Result<LiouvilleEstimate> {
    if n < 2 {
        return Err(Error::contract("Liouville average needs at least two samples"));
    }
    let pts = sample_liouville(model, sampler, n)?;
    let vals: Result<Vec<Mat2>> = pts.iter().map(|z| b0.eval(&z.p, &z.x)).collect();
    let vals = vals?;
    let mean = vals.iter().copied().sum::<Mat2>().scale_re(1.0 / n as f64);
    let mut worst = 0.0f64;
    for (r, c) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        let (mut vr, mut vi) = (0.0, 0.0);
        for v in &vals {
            let e = v.0[r][c] - mean.0[r][c];
            vr += e.re * e.re;
            vi += e.im * e.im;
        }
        let denom = (n - 1) as f64 * n as f64;
        worst = worst.max((vr / denom).sqrt()).max((vi / denom).sqrt());
    }
    Ok(LiouvilleEstimate {
        mean,
        std_error: worst,
        samples: n,
    })
}

/// Liouville volume `∫ δ(H_{0,s} − E) dp dx`, estimated from the fraction of
/// box points in `{|H_{0,s} − E| < width}`. Returns `(volume, std_error)`.
pub fn shell_volume(
    model: &HamiltonianModel,
    energy: f64,
    width: f64,
    n: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if !(width > 0.0) || n == 0 {
        return Err(Error::Sampler("shell volume needs positive width and samples".into()));
    }
    let (lo, hi) = model.bbox.corners();
    let d = model.dim;
    const CHUNK: usize = 1 << 16;
    let chunks = n.div_ceil(CHUNK);
    let hits: usize = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let mut s = vec![0.0; 2 * d];
            let m = CHUNK.min(n - c * CHUNK);
            let mut hits = 0usize;
            for _ in 0..m {
                for k in 0..2 * d {
                    s[k] = rng.random_range(lo[k]..hi[k]);
                }
                let (p, x) = s.split_at(d);
                if ((model.h0s)(p, x) - energy).abs() < width {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    if hits == 0 {
        return Err(Error::Sampler("no box sample fell in the shell".into()));
    }
    let frac = hits as f64 / n as f64;
    let scale = model.bbox.volume() / (2.0 * width);
    Ok((frac * scale, (frac * (1.0 - frac) / n as f64).sqrt() * scale))
}

/// Shell × Haar ensemble: `n_base` base points each paired with `n_g` group
/// elements, drawn from `seed`.
pub fn sample_ensemble(
    model: &HamiltonianModel,
    sampler: &ShellSampler,
    n_base: usize,
    n_g: usize,
) -> Result<Vec<ExtendedPoint>> {
    let bases = sample_liouville(model, sampler, n_base)?;
    let gs = sample_haar(n_base * n_g, sampler.seed.wrapping_add(1))?;
    Ok(bases
        .iter()
        .enumerate()
        .flat_map(|(i, b)| {
            gs[i * n_g..(i + 1) * n_g].iter().map(move |g| ExtendedPoint {
                base: b.clone(),
                g: *g,
            })
        })
        .collect())
}

/// Deviation statistics for one averaging time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationStats {
    pub t: f64,
    pub mean: f64,
    pub max: f64,
    /// Mean over base points of the range of deviations across their `g`'s.
    pub g_spread: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErgodicityReport {
    /// `(tr μ_E(B₀)/2)·Id` as used for the deviations, real diagonal value.
    pub target: f64,
    pub stats: Vec<DeviationStats>,
    /// `deviations[T][member]`, members in ensemble order.
    pub deviations: Vec<Vec<f64>>,
}

impl ErgodicityReport {
    pub fn write_members_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["member", "t", "deviation"])?;
        for (s, devs) in self.stats.iter().zip(&self.deviations) {
            for (i, d) in devs.iter().enumerate() {
                wr.write_record([i.to_string(), format!("{}", s.t), format!("{d:.17e}")])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// For each `T`, the spread of `‖birkhoff_average − haar_adjoint_average(μ_E(B₀))‖_F`
/// over the ensemble. `mu_trace` is `tr μ_E(B₀)`; when `None` it is estimated
/// from the ensemble's time-averaged traces at the largest `T`.
pub fn ergodicity_report(
    model: &HamiltonianModel,
    b0: &MatrixSymbol,
    ensemble: &[ExtendedPoint],
    schedule: &[f64],
    mu_trace: Option<f64>,
    tol: &Tolerance,
) -> Result<ErgodicityReport> {
    if ensemble.is_empty() {
        return Err(Error::contract("empty ensemble"));
    }
    let mut groups: Vec<(PhasePoint, Vec<usize>)> = Vec::new();
    for (i, m) in ensemble.iter().enumerate() {
        match groups.iter_mut().find(|(b, _)| *b == m.base) {
            Some((_, idx)) => idx.push(i),
            None => groups.push((m.base.clone(), vec![i])),
        }
    }
    let results: Result<Vec<Vec<Vec<Mat2>>>> = groups
        .par_iter()
        .map(|(b, idx)| {
            let gs: Vec<SU2Element> = idx.iter().map(|&i| ensemble[i].g).collect();
            birkhoff_schedule(model, b0, b, &gs, schedule, tol)
        })
        .collect();
    let results = results?;
    let nt = schedule.len();
    let mut avgs = vec![vec![Mat2::zero(); ensemble.len()]; nt];
    for ((_, idx), res) in groups.iter().zip(&results) {
        for (k, per_t) in res.iter().enumerate() {
            for (j, &i) in idx.iter().enumerate() {
                avgs[k][i] = per_t[j];
            }
        }
    }
    let tr = match mu_trace {
        Some(v) => v,
        None => {
            let last = (0..nt).max_by(|&a, &b| schedule[a].total_cmp(&schedule[b])).unwrap();
            avgs[last].iter().map(|m| m.trace().re).sum::<f64>() / ensemble.len() as f64
        }
    };
    let target = Mat2::identity().scale_re(0.5 * tr);
    let mut stats = Vec::with_capacity(nt);
    let mut deviations = Vec::with_capacity(nt);
    for (k, &t) in schedule.iter().enumerate() {
        let devs: Vec<f64> = avgs[k].iter().map(|m| (*m - target).frobenius()).collect();
        let mean = devs.iter().sum::<f64>() / devs.len() as f64;
        let max = devs.iter().copied().fold(0.0, f64::max);
        let g_spread = groups
            .iter()
            .map(|(_, idx)| {
                let (lo, hi) = idx
                    .iter()
                    .map(|&i| devs[i])
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
                hi - lo
            })
            .sum::<f64>()
            / groups.len() as f64;
        stats.push(DeviationStats { t, mean, max, g_spread });
        deviations.push(devs);
    }
    Ok(ErgodicityReport {
        target: 0.5 * tr,
        stats,
        deviations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_flow::SpinCoupling;
    use std::f64::consts::PI;

    fn harmonic() -> HamiltonianModel {
        HamiltonianModel::harmonic(1, 1.0, 0.5).unwrap()
    }

    fn shell_point() -> PhasePoint {
        PhasePoint::new(vec![0.0], vec![2f64.sqrt()]).unwrap()
    }

    #[test]
    fn evolve_examples() {
        let tol = Tolerance::new(1e-12);
        let m = harmonic().with_coupling(SpinCoupling::constant(PauliAxis::Z, 1.0));
        let pt = ExtendedPoint::new(&m, shell_point(), SU2Element::identity(), 1e-12).unwrap();
        assert_eq!(evolve_extended(&m, &pt, 0.0, &tol).unwrap(), pt);
        let out = evolve_extended(&m, &pt, PI, &tol).unwrap();
        assert!((out.g.as_matrix() + Mat2::identity()).frobenius() < 1e-9);
        assert!((out.base.x[0] + 2f64.sqrt()).abs() < 1e-9);

        let free = harmonic();
        let g = SU2Element::rotation(PauliAxis::Y, 0.4);
        let pt = ExtendedPoint::new(&free, shell_point(), g, 1e-12).unwrap();
        let out = evolve_extended(&free, &pt, 1.3, &tol).unwrap();
        assert!(out.g.distance(&g) < 1e-14);
        assert!((out.base.x[0] - 2f64.sqrt() * 1.3f64.cos()).abs() < 1e-9);

        assert!(ExtendedPoint::new(&m, PhasePoint::new(vec![0.0], vec![0.1]).unwrap(), g, 1e-3).is_err());
    }

    #[test]
    fn haar_average_examples() {
        assert_eq!(haar_adjoint_average(&Mat2::identity()).unwrap(), Mat2::identity());
        assert_eq!(haar_adjoint_average(&Mat2::pauli(PauliAxis::Z)).unwrap(), Mat2::zero());
        assert_eq!(haar_adjoint_average(&Mat2::diag(2.0, 0.0)).unwrap(), Mat2::identity());
        assert!(haar_adjoint_average(&Mat2::unit(0, 1)).is_err());
    }

    #[test]
    fn so3_image_is_rotation() {
        let h = SU2Element::from_quaternion([0.2, 0.5, -0.4, 0.3]).unwrap();
        let r = so3_image(&h);
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn samplers_are_deterministic() {
        let m = harmonic();
        let s = ShellSampler::for_model(&m, 7);
        assert_eq!(sample_liouville(&m, &s, 10).unwrap(), sample_liouville(&m, &s, 10).unwrap());
        assert_eq!(sample_haar(5, 3).unwrap(), sample_haar(5, 3).unwrap());
        assert_ne!(sample_haar(5, 3).unwrap(), sample_haar(5, 4).unwrap());
        assert!(sample_haar(0, 1).is_err());
        let bad = ShellSampler {
            max_proposals: 10,
            ..s.clone().with_width(1e-12)
        };
        assert!(matches!(sample_liouville(&m, &bad, 1), Err(Error::Sampler(_))));
    }

    #[test]
    fn shell_samples_match_oracle() {
        let m = harmonic();
        let s = ShellSampler::for_model(&m, 11);
        let n = 100_000;
        let pts = sample_liouville(&m, &s, n).unwrap();
        assert!(pts.iter().all(|z| (m.energy_at(z) - 1.0).abs() < s.width));
        let mean_x = pts.iter().map(|z| z.x[0]).sum::<f64>() / n as f64;
        assert!(mean_x.abs() < 0.01);
        let x2 = MatrixSymbol::scalar("x2", |_, x| x[0] * x[0]);
        let est = liouville_average(&m, &x2, &s, n).unwrap();
        assert!((est.mean - Mat2::identity()).max_abs() < 0.02);
        let id = liouville_average(&m, &MatrixSymbol::identity(), &s, 100).unwrap();
        assert_eq!(id.mean, Mat2::identity());
        let sz = liouville_average(&m, &MatrixSymbol::pauli(PauliAxis::Z), &s, 100).unwrap();
        assert!((sz.mean - Mat2::pauli(PauliAxis::Z)).max_abs() < 1e-15);
    }

    #[test]
    fn birkhoff_examples() {
        let m = harmonic().with_coupling(SpinCoupling::constant(PauliAxis::Z, 1.0));
        let pt = ExtendedPoint::new(&m, shell_point(), SU2Element::identity(), 1e-12).unwrap();
        for t in [1.0, 7.3] {
            let id = birkhoff_average(&m, &MatrixSymbol::identity(), &pt, t, 0.1).unwrap();
            assert!((id - Mat2::identity()).max_abs() < 1e-12);
            let sz = birkhoff_average(&m, &MatrixSymbol::pauli(PauliAxis::Z), &pt, t, 0.1).unwrap();
            assert!((sz - Mat2::pauli(PauliAxis::Z)).max_abs() < 1e-10);
        }
        // σ₁ rotates at angular frequency 2 about σ₃
        let sx = birkhoff_average(&m, &MatrixSymbol::pauli(PauliAxis::X), &pt, PI, 0.1).unwrap();
        assert!(sx.max_abs() < 1e-9, "{sx:?}");
    }

    #[test]
    fn abelian_report_is_g_dependent() {
        let m = harmonic().with_coupling(SpinCoupling::constant(PauliAxis::Z, 1.0));
        let s = ShellSampler::for_model(&m, 5);
        let ens = sample_ensemble(&m, &s, 3, 4).unwrap();
        let rep = ergodicity_report(
            &m,
            &MatrixSymbol::pauli(PauliAxis::Z),
            &ens,
            &[10.0, 30.0],
            Some(0.0),
            &Tolerance::new(1e-10).with_max_step(0.1),
        )
        .unwrap();
        for st in &rep.stats {
            assert!((st.mean - 2f64.sqrt()).abs() < 1e-6);
            assert!((st.max - 2f64.sqrt()).abs() < 1e-6);
        }
        let id = ergodicity_report(&m, &MatrixSymbol::identity(), &ens, &[10.0], None, &Tolerance::new(1e-10))
            .unwrap();
        assert!(id.stats[0].max < 1e-8);
        assert!((id.target - 1.0).abs() < 1e-10);
    }
}
