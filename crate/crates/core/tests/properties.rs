use std::sync::OnceLock;

use hyperlab::algebra::{analyze_matrix, periodic_points, torus_distance, IntMatrix, ToralAutomorphism};
use hyperlab::cocycle::lyapunov_exponents;
use hyperlab::conjugacy::{solve_conjugacy, ConjugacyConfig, ConjugacySolution};
use hyperlab::maps::{make_shear_perturbation, ShearFactor, SmoothTorusMap, TrigProfile};
use proptest::prelude::*;

fn cat() -> ToralAutomorphism {
    analyze_matrix(&"2,1;1,1".parse().unwrap()).unwrap()
}

fn perturbed_solution() -> &'static ConjugacySolution {
    static SOL: OnceLock<ConjugacySolution> = OnceLock::new();
    SOL.get_or_init(|| {
        let l = cat();
        let f = make_shear_perturbation(
            &l,
            &[ShearFactor::new(0, 1, 0.1, TrigProfile::unit_sine(1))],
            1.0,
        )
        .unwrap();
        solve_conjugacy(&f, &l, &ConjugacyConfig::default()).unwrap()
    })
}

/// Products of elementary shears are unimodular.
fn shear_product() -> impl Strategy<Value = IntMatrix> {
    proptest::collection::vec((0usize..3, 0usize..3, -2i64..=2), 1..6).prop_map(|ops| {
        let mut m = IntMatrix::identity(3);
        for (i, j, k) in ops {
            if i == j {
                continue;
            }
            let mut rows = IntMatrix::identity(3).rows();
            rows[i][j] = k;
            m = m.mul(&IntMatrix::from_rows(rows).unwrap());
        }
        m
    })
}

fn shear_factor(dim: usize) -> impl Strategy<Value = ShearFactor> {
    (0..dim, 0..dim, -0.08f64..0.08, 1u32..3)
        .prop_filter("driver differs from direction", |(i, j, _, _)| i != j)
        .prop_map(|(i, j, a, k)| ShearFactor::new(i, j, a, TrigProfile::unit_sine(k)))
}

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0f64..1.0, d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unimodular_inverse_is_exact(m in shear_product()) {
        prop_assert_eq!(m.det().abs(), 1);
        let inv = m.unimodular_inverse().unwrap();
        prop_assert_eq!(m.mul(&inv), IntMatrix::identity(3));
    }

    #[test]
    fn matrix_literal_round_trips(m in shear_product()) {
        let parsed: IntMatrix = m.to_string().parse().unwrap();
        prop_assert_eq!(parsed, m);
    }

    #[test]
    fn inverse_undoes_the_map(s in proptest::collection::vec(shear_factor(2), 1..3), x in point(2)) {
        let f = make_shear_perturbation(&cat(), &s, 1.0).unwrap();
        prop_assert!(torus_distance(&f.inverse_eval(&f.eval(&x)), &x) < 1e-12);
        prop_assert!(torus_distance(&f.eval(&f.inverse_eval(&x)), &x) < 1e-12);
    }

    #[test]
    fn shears_preserve_volume(s in proptest::collection::vec(shear_factor(2), 1..3), x in point(2)) {
        let f = make_shear_perturbation(&cat(), &s, 1.0).unwrap();
        prop_assert!((f.det_jacobian(&x).abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conjugacy_equation_holds(x in point(2)) {
        let sol = perturbed_solution();
        let lhs = sol.eval(&sol.f.eval(&x));
        let rhs = sol.linear.apply(&sol.eval(&x));
        prop_assert!(torus_distance(&lhs, &rhs) < 1e-8);
    }

    #[test]
    fn conjugacy_inverse_round_trips(x in point(2)) {
        let sol = perturbed_solution();
        let back = sol.inverse(&sol.eval(&x)).unwrap();
        prop_assert!(torus_distance(&back, &x) < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn exponents_sum_to_log_det(s in proptest::collection::vec(shear_factor(2), 1..3), seed in 0u64..1000) {
        let f = make_shear_perturbation(&cat(), &s, 1.0).unwrap();
        let e = lyapunov_exponents(&f, None, 2000, seed).unwrap();
        prop_assert!((e.sum() - e.log_det_average).abs() < 1e-9);
        prop_assert!(e.exponents.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn rational_periodic_points_are_periodic(p in 1u32..4) {
        let l = cat();
        let linear = SmoothTorusMap::linear(&l);
        for q in periodic_points(&l.matrix, p).unwrap() {
            prop_assert!(torus_distance(&linear.iterate(&q.point, q.period as i64), &q.point) < 1e-9);
            prop_assert_eq!(p % q.period, 0);
        }
    }
}
