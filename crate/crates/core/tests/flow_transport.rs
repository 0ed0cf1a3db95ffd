use proptest::prelude::*;
use spinqe::spin_transport::compose_transport;
use spinqe::*;

fn tol() -> Tolerance {
    Tolerance::new(1e-11)
}

#[test]
fn quartic_vector_field_oracle() {
    let m = HamiltonianModel::quartic(0.01, 1.0, 0.1).unwrap();
    let z = PhasePoint::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
    let (dp_dt, dx_dt) = vector_field(&m, &z).unwrap();
    for (v, want) in dx_dt.iter().zip([0.0, 0.0]) {
        assert!((v - want).abs() < 1e-14);
    }
    for (v, want) in dp_dt.iter().zip([-1.01, -1.01]) {
        assert!((v - want).abs() < 1e-14, "{dp_dt:?}");
    }
}

#[test]
fn quartic_energy_drift_on_the_shell() {
    let m = HamiltonianModel::quartic(0.01, 1.0, 0.1).unwrap();
    // H = p₁²/2 + 0.5·1·0.25 + 0.01·(1 + 0.0625)/4 = 1 with p₂ = 0.
    let pot: f64 = 0.5 * 0.25 + 0.01 * (1.0 + 0.0625) / 4.0;
    let z = PhasePoint::new(vec![(2.0 * (1.0 - pot)).sqrt(), 0.0], vec![1.0, 0.5]).unwrap();
    assert!((m.energy_at(&z) - 1.0).abs() < 1e-14);
    let traj = integrate_flow(&m, &z, 50.0, StepControl::Adaptive(Tolerance::new(1e-10))).unwrap();
    assert!(traj.energy_drift <= 1e-8, "{}", traj.energy_drift);
}

#[test]
fn harmonic_flow_is_a_rotation() {
    let m = HamiltonianModel::harmonic(1, 1.0, 0.5).unwrap();
    let z = PhasePoint::new(vec![0.3], vec![1.1]).unwrap();
    let t = 2.5f64;
    let end = integrate_flow(&m, &z, t, StepControl::Adaptive(tol())).unwrap().end().clone();
    let (c, s) = (t.cos(), t.sin());
    assert!((end.x[0] - (1.1 * c + 0.3 * s)).abs() < 1e-9);
    assert!((end.p[0] - (0.3 * c - 1.1 * s)).abs() < 1e-9);
}

#[test]
fn abelian_transport_matches_closed_form() {
    let m = HamiltonianModel::harmonic(1, 1.0, 0.5)
        .unwrap()
        .with_coupling(SpinCoupling::abelian(PauliAxis::Y, |p, x| x[0] + 0.5 * p[0] * p[0]));
    let z = PhasePoint::new(vec![0.2], vec![-0.7]).unwrap();
    let traj = integrate_flow(&m, &z, 7.0, StepControl::Adaptive(tol())).unwrap();
    let ode = integrate_spin_transport(&m, &traj).unwrap();
    let exact = abelian_closed_form(&m, &traj).unwrap();
    let last = ode.elements.last().unwrap();
    assert!(last.distance(exact.elements.last().unwrap()) < 1e-8);
}

fn harmonic_with_field() -> HamiltonianModel {
    HamiltonianModel::harmonic(2, 1.0, 0.5)
        .unwrap()
        .with_coupling(SpinCoupling::vector(|p, x| [x[1], p[0] - x[0], 0.3 + x[0] * x[1]]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn flow_is_reversible(p in -1.0..1.0f64, x in -1.0..1.0f64, t in 0.1..6.0f64) {
        let m = HamiltonianModel::harmonic(1, 1.0, 0.5).unwrap();
        let z = PhasePoint::new(vec![p], vec![x]).unwrap();
        let fwd = integrate_flow(&m, &z, t, StepControl::Adaptive(tol())).unwrap();
        let back = integrate_flow(&m, fwd.end(), -t, StepControl::Adaptive(tol())).unwrap();
        prop_assert!(back.end().distance(&z) < 1e-8);
    }

    #[test]
    fn transport_is_a_cocycle(p in -0.7..0.7f64, x in -0.7..0.7f64, t in 0.1..3.0f64, s in 0.1..3.0f64) {
        let m = harmonic_with_field();
        let z = PhasePoint::new(vec![p, 0.1], vec![x, -0.2]).unwrap();
        let (zt, dt) = transport(&m, &z, t, &tol()).unwrap();
        let (_, ds) = transport(&m, &zt, s, &tol()).unwrap();
        let (_, dts) = transport(&m, &z, t + s, &tol()).unwrap();
        prop_assert!(dts.distance(&compose_transport(&dt, &ds)) < 1e-8);
        prop_assert!(dts.unitarity_defect() < 1e-12);
    }

    #[test]
    fn transport_inverts_backwards(p in -0.7..0.7f64, x in -0.7..0.7f64, t in 0.1..3.0f64) {
        let m = harmonic_with_field();
        let z = PhasePoint::new(vec![p, 0.4], vec![x, 0.0]).unwrap();
        let (zt, d) = transport(&m, &z, t, &tol()).unwrap();
        let (zb, db) = transport(&m, &zt, -t, &tol()).unwrap();
        prop_assert!(zb.distance(&z) < 1e-8);
        prop_assert!(db.distance(&d.inverse()) < 1e-8);
    }

    #[test]
    fn constant_coupling_is_a_rotation(c in -2.0..2.0f64, t in 0.0..5.0f64) {
        let m = HamiltonianModel::harmonic(1, 1.0, 0.5).unwrap().with_coupling(SpinCoupling::constant(PauliAxis::Z, c));
        let z = PhasePoint::new(vec![0.5], vec![0.5]).unwrap();
        let (_, d) = transport(&m, &z, t, &tol()).unwrap();
        let want = Mat2::new(C64::from_polar(1.0, -c * t), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::from_polar(1.0, c * t));
        prop_assert!((d.as_matrix() - want).frobenius() < 1e-9);
    }
}
