use proptest::prelude::*;
use spinqe::wigner::{expectation_from_wigner, husimi_transform, wigner_transform, FieldKind};
use spinqe::*;

fn normalized(raw: &[(f64, f64)]) -> Vec<C64> {
    let v: Vec<C64> = raw.iter().map(|&(a, b)| C64::new(a, b)).collect();
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.iter().map(|z| z / n).collect()
}

fn state(n: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n)
        .prop_filter("nonzero", |v| v.iter().map(|(a, b)| a * a + b * b).sum::<f64>() > 1e-3)
        .prop_map(|v| normalized(&v))
}

#[test]
fn unnormalized_states_are_rejected() {
    let g = GridSpec::balanced(1, 8, 0.2).unwrap();
    assert!(wigner_transform(&vec![C64::new(1.0, 0.0); g.hilbert_dim()], &g).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pairing_reproduces_expectations(psi in state(32), c in prop::array::uniform4(-1.0..1.0f64)) {
        let g = GridSpec::balanced(1, 16, 0.2).unwrap();
        let b = MatrixSymbol::new("b", true, move |p, x| {
            Mat2::from_pauli(c[0] * x[0] * p[0], [c[1] * (x[0] + p[0]).cos(), c[2] * x[0] * x[0], c[3] * p[0]])
        });
        let w = wigner_transform(&psi, &g).unwrap();
        prop_assert_eq!(w.kind(), FieldKind::Wigner);
        let direct = weyl_quantize(&b, &g).unwrap().expectation(&psi).unwrap().re;
        prop_assert!((expectation_from_wigner(&w, &b).unwrap() - direct).abs() < 1e-10);
        prop_assert!(w.max_hermiticity_defect() < 1e-10);
    }

    #[test]
    fn marginals_are_density_matrices(psi in state(32), s in 0usize..31) {
        let g = GridSpec::balanced(1, 16, 0.2).unwrap();
        let w = wigner_transform(&psi, &g).unwrap();
        // Density per half-step node spacing dx/2.
        let m = w.marginal(s).scale_re(0.5 * g.dx());
        if s % 2 == 0 {
            let a = s / 2;
            let up = psi[a];
            let down = psi[g.sites() + a];
            let rho = Mat2::new(up * up.conj(), up * down.conj(), down * up.conj(), down * down.conj());
            prop_assert!((m - rho).frobenius() < 1e-10);
        }
        prop_assert!(m.hermiticity_defect() < 1e-12);
    }

    #[test]
    fn husimi_is_positive(c in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 6)) {
        let g = GridSpec::balanced(1, 64, 0.2).unwrap();
        // Low-order polynomials times a Gaussian keep the Husimi mass on the grid.
        let psi: Vec<C64> = (0..g.hilbert_dim())
            .map(|i| {
                let x = g.site_position(i % g.sites())[0];
                let k = 3 * (i / g.sites());
                (0..3).map(|n| C64::new(c[k + n].0, c[k + n].1) * x.powi(n as i32)).sum::<C64>() * (-x * x).exp()
            })
            .collect();
        let n = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        prop_assume!(n > 1e-3);
        let psi: Vec<C64> = psi.iter().map(|z| z / n).collect();
        let h = husimi_transform(&wigner_transform(&psi, &g).unwrap()).unwrap();
        prop_assert!(h.min_eigenvalue() >= -1e-8);
    }
}
