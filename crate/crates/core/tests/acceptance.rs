//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Criteria can be selected by number:
//! `cargo test -p spinqe --test acceptance -- 4 7`.

use std::time::Instant;

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spinqe::phase_flow::{integrate_flow, HamiltonianModel, PhasePoint, SpinCoupling, StepControl};
use spinqe::skew_product::{haar_adjoint_average, sample_ensemble, sample_haar, so3_image, ShellSampler};
use spinqe::skew_product::ergodicity_report;
use spinqe::spectra::{
    build_pauli_operator, counterexample_report, diagonalize, egorov_check, s2_variance, solve_window,
    szego_average, weyl_count, EgorovOptions, ErgodicSettings, SpectralWindow, WeylCountOptions,
};
use spinqe::spin_transport::{abelian_closed_form, compose_transport, integrate_spin_transport, transport};
use spinqe::weyl::{moyal_star, quantize_star, weyl_quantize, GridSpec, NodeJets, WeylOperator, MOYAL_STEP};
use spinqe::wigner::{expectation_from_wigner, husimi_transform, wigner_transform};
use spinqe::{Mat2, MatrixSymbol, PauliAxis, Tolerance, C64};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

type Criterion = (usize, &'static str, f64, fn() -> spinqe::Result<Outcome>);

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let all: [Criterion; 10] = [
        (1, "spin-transport exactness", 1.0, c1),
        (2, "cocycle/unitarity suite", 30.0, c2),
        (3, "Haar identities", 10.0, c3),
        (4, "Moyal/operator oracle", 60.0, c4),
        (5, "Weyl count", 60.0, c5),
        (6, "Szego convergence", 300.0, c6),
        (7, "Egorov order", 600.0, c7),
        (8, "abelian counterexample", 300.0, c8),
        (9, "ergodic-extension trend", 1800.0, c9),
        (10, "Wigner duality", 60.0, c10),
    ];
    let mut failed = 0;
    for (n, name, budget, f) in all {
        if !args.is_empty() && !args.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let res = f();
        let secs = start.elapsed().as_secs_f64();
        let (pass, detail) = match res {
            Ok(o) => (o.pass && secs < budget, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {n:>2} {name}: {} | {detail} | {secs:.2}s of {budget:.0}s",
            if pass { "PASS" } else { "FAIL" }
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn harmonic_1d() -> HamiltonianModel {
    HamiltonianModel::harmonic(1, 1.0, 0.5).unwrap()
}

fn mat_dist(a: &Mat2, b: &Mat2) -> f64 {
    (*a - *b).frobenius()
}

fn c1() -> spinqe::Result<Outcome> {
    let model = harmonic_1d().with_coupling(SpinCoupling::constant(PauliAxis::Z, 1.0));
    let mut worst_closed = 0.0f64;
    let mut worst_exact = 0.0f64;
    for (p, x) in [(0.3, 1.2), (-1.0, 0.4), (0.0, -1.41)] {
        let z = PhasePoint::new(vec![p], vec![x])?;
        let traj = integrate_flow(&model, &z, 10.0, StepControl::default())?;
        let ode = integrate_spin_transport(&model, &traj)?;
        let closed = abelian_closed_form(&model, &traj)?;
        for ((t, a), b) in ode.times.iter().zip(&ode.elements).zip(&closed.elements) {
            worst_closed = worst_closed.max(mat_dist(&a.as_matrix(), &b.as_matrix()));
            let exact = Mat2::new(
                C64::from_polar(1.0, -t),
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0),
                C64::from_polar(1.0, *t),
            );
            worst_exact = worst_exact.max(mat_dist(&a.as_matrix(), &exact));
        }
    }
    Ok(outcome(
        worst_closed <= 1e-6 && worst_exact <= 1e-6,
        format!("max |ode - closed form| = {worst_closed:.2e}, max |ode - exp(-i t s3)| = {worst_exact:.2e}"),
    ))
}

fn random_model(rng: &mut ChaCha8Rng) -> HamiltonianModel {
    let base = match rng.random_range(0..3) {
        0 => HamiltonianModel::harmonic(1, 1.0, 0.5).unwrap(),
        1 => HamiltonianModel::harmonic(2, 1.0, 0.5).unwrap(),
        _ => HamiltonianModel::quartic(rng.random_range(0.1..0.6), 1.0, 0.5).unwrap(),
    };
    let coef: [[f64; 4]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)));
    base.with_coupling(SpinCoupling::vector(move |p, x| {
        std::array::from_fn(|k| {
            let c = coef[k];
            c[0] + c[1] * x[0] + c[2] * p[0] + 0.3 * c[3] * x[x.len() - 1] * x[0]
        })
    }))
}

fn c2() -> spinqe::Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let tol = Tolerance::new(1e-10);
    let (mut unit, mut cocycle, mut inverse, mut rev) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let model = random_model(&mut rng);
        let (lo, hi) = model.bbox.corners();
        let s: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| rng.random_range(*a..*b)).collect();
        let z = PhasePoint::from_state(&s, model.dim);
        let t = rng.random_range(0.5..2.0);
        let u = rng.random_range(0.5..2.0);
        let (zt, dt) = transport(&model, &z, t, &tol)?;
        let (_, ds) = transport(&model, &zt, u, &tol)?;
        let (_, dts) = transport(&model, &z, t + u, &tol)?;
        let (_, dback) = transport(&model, &zt, -t, &tol)?;
        let d = dt.as_matrix();
        unit = unit.max(mat_dist(&(d.adjoint() * d), &Mat2::identity()));
        cocycle = cocycle.max(dts.distance(&compose_transport(&dt, &ds)));
        inverse = inverse.max(compose_transport(&dt, &dback).distance(&spinqe::SU2Element::identity()));
        let fwd = integrate_flow(&model, &z, t, StepControl::Adaptive(tol))?;
        let back = integrate_flow(&model, fwd.end(), -t, StepControl::Adaptive(tol))?;
        rev = rev.max(back.end().distance(&z));
    }
    let pass = unit <= 1e-10 && cocycle <= 1e-6 && inverse <= 1e-6 && rev <= 10.0 * tol.rtol;
    Ok(outcome(
        pass,
        format!("unitarity {unit:.1e}, cocycle {cocycle:.1e}, inverse {inverse:.1e}, reversibility {rev:.1e} (tol {:.0e})", tol.rtol),
    ))
}

fn random_hermitian(rng: &mut ChaCha8Rng) -> Mat2 {
    Mat2::from_pauli(
        rng.random_range(-2.0..2.0),
        std::array::from_fn(|_| rng.random_range(-2.0..2.0)),
    )
}

fn c3() -> spinqe::Result<Outcome> {
    let n = 100_000;
    let hs = sample_haar(n, 77)?;
    let bound = 5.0 / (n as f64).sqrt();
    let mut phi = [[0.0; 3]; 3];
    let mut conj = [Mat2::zero(); 3];
    for h in &hs {
        let r = so3_image(h);
        for k in 0..3 {
            for l in 0..3 {
                phi[k][l] += r[k][l] / n as f64;
            }
            conj[k] += h.adjoint_action(&Mat2::pauli(PauliAxis::ALL[k])).scale_re(1.0 / n as f64);
        }
    }
    let phi_max = phi.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    let conj_max = conj.iter().map(|m| m.max_abs()).fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_ratio = 0.0f64;
    for _ in 0..10 {
        let a = random_hermitian(&mut rng);
        let mc = hs.iter().map(|h| h.adjoint_action(&a)).sum::<Mat2>().scale_re(1.0 / n as f64);
        let exact = haar_adjoint_average(&a)?;
        let norm = a.hermitian_eigenvalues().iter().map(|v| v.abs()).fold(0.0, f64::max);
        worst_ratio = worst_ratio.max((mc - exact).max_abs() / (norm * bound));
    }
    Ok(outcome(
        phi_max <= bound && conj_max <= bound && worst_ratio <= 1.0,
        format!(
            "max|mean phi| {phi_max:.2e}, max|mean h*s_k h| {conj_max:.2e} (bound {bound:.2e}), adjoint average at {worst_ratio:.2} of bound"
        ),
    ))
}

/// Spin-resolved low harmonic eigenvectors: the grid's lowest `2m` states.
fn low_subspace(grid: &GridSpec, m: usize) -> spinqe::Result<Mat<C64>> {
    let h = build_pauli_operator(&harmonic_1d(), grid)?;
    let d = diagonalize(&h, Some(PauliAxis::Z))?;
    Ok(Mat::from_fn(d.vectors.nrows(), 2 * m, |i, j| d.vectors[(i, j)]))
}

fn c4() -> spinqe::Result<Outcome> {
    let grid = GridSpec::balanced(1, 256, 0.1)?;
    let q = low_subspace(&grid, 16)?;
    let monomials: [(&str, fn(f64, f64) -> f64); 6] = [
        ("1", |_, _| 1.0),
        ("p", |p, _| p),
        ("x", |_, x| x),
        ("p^2", |p, _| p * p),
        ("px", |p, x| p * x),
        ("x^2", |_, x| x * x),
    ];
    let mut syms = Vec::new();
    for (name, f) in monomials {
        for (mname, m) in [
            ("Id", Mat2::identity()),
            ("s1", Mat2::pauli(PauliAxis::X)),
            ("s2", Mat2::pauli(PauliAxis::Y)),
            ("s3", Mat2::pauli(PauliAxis::Z)),
        ] {
            syms.push(MatrixSymbol::scalar_times(format!("{name}*{mname}"), move |p, x| f(p[0], x[0]), m));
        }
    }
    let ops: spinqe::Result<Vec<WeylOperator>> = syms.iter().map(|s| weyl_quantize(s, &grid)).collect();
    let ops = ops?;
    let opq: Vec<Mat<C64>> = ops.iter().map(|o| o.matrix() * &q).collect();
    let jets: spinqe::Result<Vec<NodeJets>> = syms.iter().map(|s| NodeJets::new(s, &grid, 2, MOYAL_STEP)).collect();
    let jets = jets?;
    let mut cross = 0.0f64;
    for (k, s) in syms.iter().enumerate().step_by(5) {
        let direct = weyl_quantize(&moyal_star(s, s, 2, &grid)?, &grid)?;
        let fast = quantize_star(&jets[k], &jets[k], 2)?;
        cross = cross.max((direct.matrix() - fast.matrix()).norm_l2() / direct.frobenius_norm().max(1.0));
    }
    let mut worst = 0.0f64;
    let mut worst_pair = String::new();
    for (i, b1) in syms.iter().enumerate() {
        for (j, b2) in syms.iter().enumerate() {
            let star = quantize_star(&jets[i], &jets[j], 2)?;
            let prod = ops[i].matrix() * &opq[j];
            let diff = (star.matrix() * &q - &prod).norm_l2();
            let scale = prod.norm_l2();
            let rel = if scale > 0.0 { diff / scale } else { diff };
            if rel > worst {
                worst = rel;
                worst_pair = format!("{} , {}", b1.name(), b2.name());
            }
        }
    }
    Ok(outcome(
        worst <= 1e-8 && cross <= 1e-12,
        format!("576 pairs, max relative defect on the 32 lowest states {worst:.2e} ({worst_pair}); jets vs direct {cross:.1e}"),
    ))
}

fn c5() -> spinqe::Result<Outcome> {
    let model = harmonic_1d();
    let mut parts = Vec::new();
    let mut pass = true;
    for (hbar, grid) in [
        (0.05, GridSpec::new(1, 6.0, 512, 0.05)?),
        (0.025, GridSpec::balanced(1, 512, 0.025)?),
    ] {
        let w = SpectralWindow::new(1.0, 1.0, hbar)?;
        let eig = solve_window(&build_pauli_operator(&model, &grid)?, &w)?;
        let (pred, se) = weyl_count(&model, &w, &WeylCountOptions::default())?;
        pass &= eig.count() == 4 && (pred - 4.0).abs() <= 0.05;
        parts.push(format!("hbar {hbar}: N_I {} vs Weyl {pred:.4} ± {se:.4}", eig.count()));
    }
    Ok(outcome(pass, parts.join("; ")))
}

fn c6() -> spinqe::Result<Outcome> {
    let model = harmonic_1d().with_coupling(SpinCoupling::abelian(PauliAxis::Z, |_, x| x[0]));
    let x2 = MatrixSymbol::scalar("x^2", |_, x| x[0] * x[0]);
    let mut errs = Vec::new();
    let mut parts = Vec::new();
    for (hbar, n) in [(0.02, 512), (0.01, 1024)] {
        let grid = GridSpec::balanced(1, n, hbar)?;
        let w = SpectralWindow::new(1.0, 1.0, hbar)?;
        let eig = solve_window(&build_pauli_operator(&model, &grid)?, &w)?;
        let (avg, dev) = szego_average(&eig, &weyl_quantize(&x2, &grid)?, 1.0)?;
        errs.push(dev);
        parts.push(format!("hbar {hbar}: N_I {} avg {avg:.6} |avg-1| {dev:.2e} ({:.2} hbar)", eig.count(), dev / hbar));
    }
    let ratio = errs[1] / errs[0];
    Ok(outcome(
        ratio <= 0.6 && errs[0] <= 0.02,
        format!("{}; ratio {ratio:.3}", parts.join("; ")),
    ))
}

fn c7() -> spinqe::Result<Outcome> {
    let model = harmonic_1d().with_coupling(SpinCoupling::abelian(PauliAxis::Z, |_, x| x[0] * x[0]));
    let grids: spinqe::Result<Vec<GridSpec>> = [(0.04, 256), (0.02, 512), (0.01, 1024)]
        .iter()
        .map(|&(h, n)| GridSpec::balanced(1, n, h))
        .collect();
    let curve = egorov_check(&model, &MatrixSymbol::pauli(PauliAxis::X), 1.0, &grids?, &EgorovOptions::default())?;
    let pts: Vec<String> = curve.points.iter().map(|p| format!("e({})={:.3e}", p.hbar, p.error)).collect();
    Ok(outcome(
        curve.slope >= 0.8,
        format!("{}; slope {:.3}", pts.join(" "), curve.slope),
    ))
}

fn c8() -> spinqe::Result<Outcome> {
    let model = harmonic_1d().with_coupling(SpinCoupling::constant(PauliAxis::Z, 1.0));
    let grids: spinqe::Result<Vec<GridSpec>> = [(0.04, 256), (0.02, 512), (0.01, 1024)]
        .iter()
        .map(|&(h, n)| GridSpec::balanced(1, n, h))
        .collect();
    let settings = ErgodicSettings {
        n_base: 16,
        n_g: 8,
        schedule: vec![10.0, 30.0, 100.0],
        seed: 8,
    };
    let rep = counterexample_report(&model, &grids?, 1.0, 1.0, &settings)?;
    let comm = rep.levels.iter().map(|l| l.commutator).fold(0.0, f64::max);
    let s2_min = rep.levels.iter().map(|l| l.s2).fold(f64::INFINITY, f64::min);
    let split = rep.levels.iter().all(|l| l.plus.abs_diff(l.minus) <= 2 && l.plus + l.minus == l.count);
    let sqrt2 = 2f64.sqrt();
    let dev = rep
        .classical
        .deviations
        .iter()
        .flatten()
        .map(|d| (d - sqrt2).abs())
        .fold(0.0, f64::max);
    let spread = rep.classical.stats.iter().map(|s| s.g_spread).fold(0.0, f64::max);
    let s2s: Vec<String> = rep.levels.iter().map(|l| format!("{:.4}", l.s2)).collect();
    Ok(outcome(
        comm <= 1e-8 && s2_min >= 0.9 && split && dev <= 1e-3,
        format!(
            "commutator {comm:.1e}; S2 [{}]; families balanced {split}; max |dev - sqrt2| {dev:.1e} over T {:?}, g-spread {spread:.1e}",
            s2s.join(", "),
            settings.schedule
        ),
    ))
}

/// The two-dimensional quartic demo of the `quartic_ergodic_demo` scenario.
fn quartic_demo() -> HamiltonianModel {
    HamiltonianModel::quartic(0.1, 0.25, 0.1)
        .unwrap()
        .with_coupling(SpinCoupling::magnetic(1.0, |x| [x[1], x[0], 0.5]))
}

fn c9() -> spinqe::Result<Outcome> {
    let model = quartic_demo();
    let sampler = ShellSampler::for_model(&model, 9);
    let ensemble = sample_ensemble(&model, &sampler, 48, 4)?;
    let schedule = [100.0, 300.0, 1000.0];
    let rep = ergodicity_report(
        &model,
        &MatrixSymbol::pauli(PauliAxis::Z),
        &ensemble,
        &schedule,
        Some(0.0),
        &Tolerance::new(1e-9),
    )?;
    let means: Vec<f64> = rep.stats.iter().map(|s| s.mean).collect();
    let classical = means.windows(2).all(|w| w[1] < w[0]);
    let mut s2s = Vec::new();
    let mut counts = Vec::new();
    for hbar in [0.16, 0.08, 0.04] {
        let grid = quartic_grid(&model, hbar)?;
        let w = SpectralWindow::new(model.energy, 1.0, hbar)?;
        let eig = solve_window(&build_pauli_operator(&model, &grid)?, &w)?;
        counts.push(eig.count());
        s2s.push(s2_variance(&eig, &WeylOperator::spin(&grid, PauliAxis::Z), 0.0)?);
    }
    let quantum = s2s.windows(2).all(|w| w[1] < w[0]);
    Ok(outcome(
        classical && quantum,
        format!(
            "classical means {:?}; S2 {:?} with N_I {:?}",
            means.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
            s2s.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
            counts
        ),
    ))
}

/// 40² grid whose position and momentum ranges are split in proportion to
/// the shell's extents.
fn quartic_grid(model: &HamiltonianModel, hbar: f64) -> spinqe::Result<GridSpec> {
    let n = 40;
    let area = std::f64::consts::PI * hbar * n as f64 / 2.0;
    let ratio = model.bbox.x_hi[0] / model.bbox.p_hi[0];
    GridSpec::new(2, (area * ratio).sqrt(), n, hbar)
}

fn c10() -> spinqe::Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let grid = GridSpec::balanced(1, 64, 0.1)?;
    let grid2 = GridSpec::balanced(2, 8, 0.4)?;
    let mut worst = 0.0f64;
    for k in 0..20 {
        let g = if k % 5 == 4 { &grid2 } else { &grid };
        let n = g.hilbert_dim();
        let raw: Vec<C64> = (0..n)
            .map(|i| {
                let x = g.site_position(i % g.sites());
                let env = if k % 2 == 0 { (-x.iter().map(|v| v * v).sum::<f64>()).exp() } else { 1.0 };
                C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * env
            })
            .collect();
        let nrm = raw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let psi: Vec<C64> = raw.iter().map(|z| z / nrm).collect();
        let c: [f64; 8] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let b = MatrixSymbol::new("random", true, move |p, x| {
            Mat2::from_pauli(
                c[0] + c[1] * x[0] * x[0] + c[2] * p[0],
                [c[3] * (p[0] + x[0]).sin(), c[4] * x[0] * p[0] + c[5], c[6] * (c[7] * x[0]).cos()],
            )
        });
        let w = wigner_transform(&psi, g)?;
        let direct = weyl_quantize(&b, g)?.expectation(&psi)?.re;
        worst = worst.max((expectation_from_wigner(&w, &b)? - direct).abs());
    }
    let model = harmonic_1d();
    let d = diagonalize(&build_pauli_operator(&model, &grid)?, Some(PauliAxis::Z))?;
    let mut floor = f64::INFINITY;
    for k in [0, 2, 5, 9, 14] {
        let psi: Vec<C64> = (0..grid.hilbert_dim()).map(|i| d.vectors[(i, k)]).collect();
        floor = floor.min(husimi_transform(&wigner_transform(&psi, &grid)?)?.min_eigenvalue());
    }
    Ok(outcome(
        worst <= 1e-8 && floor >= -1e-8,
        format!("max |wigner pairing - <psi,Bpsi>| {worst:.2e} over 20 pairs; Husimi eigenvalue floor {floor:.2e}"),
    ))
}
