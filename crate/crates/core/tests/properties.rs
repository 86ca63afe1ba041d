use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use mehler_toolkit::levy::{char_exponent, JumpLaw, LevyModel, LevyModelSpec};
use mehler_toolkit::stats::{ks_statistic, project};
use mehler_toolkit::OperatorGroup;

fn generator(dim: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.5f64..1.5, dim * dim)
        .prop_map(move |v| DMatrix::from_row_slice(dim, dim, &v))
}

fn close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    (a - b).norm() <= tol * (1.0 + b.norm())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn group_law(q in generator(3), t in -2.0f64..2.0, s in -2.0f64..2.0) {
        let g = OperatorGroup::new(q).unwrap();
        prop_assert!(close(&(g.exp(t) * g.exp(s)), &g.exp(t + s), 1e-11));
    }

    #[test]
    fn inverse(q in generator(2), t in -3.0f64..3.0) {
        let g = OperatorGroup::new(q).unwrap();
        prop_assert!(close(&(g.exp(t) * g.exp(-t)), &DMatrix::identity(2, 2), 1e-11));
    }

    #[test]
    fn adjoint_matches_transpose(q in generator(3), t in -2.0f64..2.0, y in prop::collection::vec(-2.0f64..2.0, 3)) {
        let g = OperatorGroup::new(q).unwrap();
        let y = DVector::from_vec(y);
        let a = g.adjoint_apply(t, &y).unwrap();
        let b = g.exp(t).transpose() * &y;
        prop_assert!((a - b).norm() <= 1e-12 * (1.0 + y.norm()));
    }

    #[test]
    fn apply_is_linear(
        q in generator(2),
        t in 0.0f64..2.0,
        x in prop::collection::vec(-3.0f64..3.0, 2),
        z in prop::collection::vec(-3.0f64..3.0, 2),
        c in -2.0f64..2.0,
    ) {
        let g = OperatorGroup::new(q).unwrap();
        let (x, z) = (DVector::from_vec(x), DVector::from_vec(z));
        let lhs = g.apply(t, &(&x * c + &z)).unwrap();
        let rhs = g.apply(t, &x).unwrap() * c + g.apply(t, &z).unwrap();
        prop_assert!((lhs - &rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
    }

    #[test]
    fn ks_invariant_under_monotone_maps(
        a in prop::collection::vec(-5.0f64..5.0, 20..60),
        b in prop::collection::vec(-5.0f64..5.0, 20..60),
    ) {
        let d = ks_statistic(&a, &b);
        let f = |v: &Vec<f64>| v.iter().map(|x| x.exp() * 3.0 + 1.0).collect::<Vec<_>>();
        prop_assert!((ks_statistic(&f(&a), &f(&b)) - d).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn projection_is_linear_in_direction(
        pts in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 1..20),
        y1 in prop::collection::vec(-2.0f64..2.0, 2),
        y2 in prop::collection::vec(-2.0f64..2.0, 2),
        c in -3.0f64..3.0,
    ) {
        let samples: Vec<DVector<f64>> = pts.into_iter().map(DVector::from_vec).collect();
        let combo: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| c * a + b).collect();
        let p = project(&samples, &combo).unwrap();
        let p1 = project(&samples, &y1).unwrap();
        let p2 = project(&samples, &y2).unwrap();
        for i in 0..samples.len() {
            prop_assert!((p[i] - (c * p1[i] + p2[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn exponent_is_hermitian_and_dissipative(
        y in prop::collection::vec(-3.0f64..3.0, 2),
        rate in 0.0f64..3.0,
        radius in 0.1f64..2.0,
    ) {
        let model = LevyModel::new(LevyModelSpec {
            dim: 2,
            drift: vec![0.3, -0.2],
            covariance: vec![vec![1.0, 0.2], vec![0.2, 0.5]],
            jump_rate: rate,
            jump_law: JumpLaw::UniformBall { radius },
        })
        .unwrap();
        let psi = char_exponent(&model).unwrap();
        let v = psi.eval(&y);
        let neg: Vec<f64> = y.iter().map(|x| -x).collect();
        let w = psi.eval(&neg);
        prop_assert!((v.re - w.re).abs() < 1e-12 && (v.im + w.im).abs() < 1e-12);
        prop_assert!(v.re <= 1e-15);
        prop_assert_eq!(psi.eval(&[0.0, 0.0]).norm(), 0.0);
    }
}
