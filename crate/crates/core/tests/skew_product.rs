use proptest::prelude::*;
use spinqe::skew_product::{sample_haar, so3_image};
use spinqe::*;

#[test]
fn haar_samples_average_traceless_matrices_away() {
    let hs = sample_haar(20_000, 3).unwrap();
    for axis in PauliAxis::ALL {
        let s = Mat2::pauli(axis);
        let mean = hs.iter().map(|h| h.adjoint_action(&s)).sum::<Mat2>().scale_re(1.0 / hs.len() as f64);
        assert!(mean.frobenius() < 0.05, "{axis:?}: {}", mean.frobenius());
    }
    assert_eq!(sample_haar(5, 3).unwrap(), sample_haar(5, 3).unwrap());
}

#[test]
fn liouville_average_on_the_oscillator_shell() {
    let m = HamiltonianModel::harmonic(1, 1.0, 0.5).unwrap();
    let sampler = ShellSampler::for_model(&m, 11);
    let x2 = MatrixSymbol::scalar("x2", |_, x| x[0] * x[0]);
    let est = liouville_average(&m, &x2, &sampler, 20_000).unwrap();
    // On p² + x² = 2 the uniform average of x² is E = 1.
    assert!((est.mean.0[0][0].re - 1.0).abs() < 5.0 * est.std_error + 1e-3);
    assert!(est.mean.0[0][1].norm() < 1e-14);
    let points = sample_liouville(&m, &sampler, 100).unwrap();
    assert!(points.iter().all(|z| (m.energy_at(z) - 1.0).abs() < sampler.width));
}

#[test]
fn birkhoff_average_of_the_identity() {
    let m = HamiltonianModel::harmonic(1, 1.0, 0.5).unwrap().with_coupling(SpinCoupling::constant(PauliAxis::X, 0.8));
    let z = ExtendedPoint::new(&m, PhasePoint::new(vec![0.0], vec![2f64.sqrt()]).unwrap(), SU2Element::identity(), 1e-9).unwrap();
    let avg = birkhoff_average(&m, &MatrixSymbol::identity(), &z, 10.0, 0.05).unwrap();
    assert!((avg - Mat2::identity()).frobenius() < 1e-9);
}

fn quaternion() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(-1.0..1.0f64).prop_filter("nonzero", |q| q.iter().map(|v| v * v).sum::<f64>() > 1e-3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn so3_image_is_a_rotation(q in quaternion()) {
        let r = so3_image(&SU2Element::from_quaternion(q).unwrap());
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot - want).abs() < 1e-12);
            }
        }
        let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
        prop_assert!((det - 1.0).abs() < 1e-12);
    }

    #[test]
    fn haar_average_keeps_only_the_trace(a in -2.0..2.0f64, b in prop::array::uniform3(-2.0..2.0f64)) {
        let m = Mat2::from_pauli(a, b);
        let avg = haar_adjoint_average(&m).unwrap();
        prop_assert!((avg - Mat2::identity().scale_re(a)).frobenius() < 1e-14);
    }

    #[test]
    fn adjoint_action_is_a_homomorphism(q1 in quaternion(), q2 in quaternion(), b in prop::array::uniform3(-1.0..1.0f64)) {
        let (g, h) = (SU2Element::from_quaternion(q1).unwrap(), SU2Element::from_quaternion(q2).unwrap());
        let m = Mat2::from_pauli(0.0, b);
        let lhs = (g * h).adjoint_action(&m);
        let rhs = h.adjoint_action(&g.adjoint_action(&m));
        prop_assert!((lhs - rhs).frobenius() < 1e-12);
    }
}
