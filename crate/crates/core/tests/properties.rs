use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use lnms_core::bench::{EnvId, EnvSpec, Environment};
use lnms_core::lnms::{weighted_distance, SampleStore};
use lnms_core::miqp::{check_solution, enumerate_exhaustive, solve_bnb, BnbConfig, MiqpError, ModeSequence};
use lnms_core::qp::{kkt_residuals, solve_qp, DenseQp, QpSettings, QpStatus};
use lnms_core::HybridOcp;

fn cart1(horizon: usize) -> HybridOcp {
    let spec = EnvSpec {
        horizon: Some(horizon),
        ..Default::default()
    };
    Environment::build(EnvId::Cart1, &spec).unwrap().ocp
}

fn state() -> impl Strategy<Value = DVector<f64>> {
    (-1.0f64..1.0, -10.0f64..10.0).prop_map(|(a, b)| DVector::from_column_slice(&[a, b]))
}

/// Positive definite QP with inequality rows around a feasible point.
fn feasible_qp() -> impl Strategy<Value = DenseQp> {
    (1usize..8, 0usize..12).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(-1.0f64..1.0, n * n),
            prop::collection::vec(-3.0f64..3.0, n),
            prop::collection::vec(-1.0f64..1.0, m * n),
            prop::collection::vec(-1.0f64..1.0, n),
            prop::collection::vec(0.0f64..1.0, m),
        )
            .prop_map(move |(l, g, a, z0, slack)| {
                let l = DMatrix::from_row_slice(n, n, &l);
                let h = &l * l.transpose() + DMatrix::identity(n, n) * 0.05;
                let a = DMatrix::from_row_slice(m, n, &a);
                let b = &a * DVector::from_vec(z0) + DVector::from_vec(slack);
                DenseQp::unconstrained(h, DVector::from_vec(g)).with_inequalities(a, b)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn qp_solutions_satisfy_kkt(qp in feasible_qp()) {
        let sol = solve_qp(&qp, &QpSettings::default()).unwrap();
        prop_assert_eq!(sol.status, QpStatus::Optimal);
        let res = kkt_residuals(&qp, &sol.z, &sol.lambda_eq, &sol.lambda_in);
        prop_assert!(res.max() <= 1e-7, "{:?}", res);
    }

    #[test]
    fn distance_is_symmetric_and_scales(a in state(), b in state(), w0 in 0.01f64..10.0, w1 in 0.01f64..10.0, k in 0.1f64..5.0) {
        let w = DVector::from_column_slice(&[w0, w1]);
        let d = weighted_distance(&a, &b, &w).unwrap();
        prop_assert!((d - weighted_distance(&b, &a, &w).unwrap()).abs() <= 1e-12 * d.max(1.0));
        let scaled = weighted_distance(&(&a * k), &(&b * k), &w).unwrap();
        prop_assert!((scaled - k * d).abs() <= 1e-9 * d.max(1.0));
    }

    #[test]
    fn nearest_neighbor_matches_linear_scan(
        points in prop::collection::vec(state(), 1..400),
        queries in prop::collection::vec(state(), 1..20),
        w0 in 0.01f64..10.0,
    ) {
        let mut store = SampleStore::new(DVector::from_column_slice(&[w0, 1.0])).unwrap().with_dedup(false);
        for (k, p) in points.iter().enumerate() {
            store.insert(p.clone(), ModeSequence::new(vec![k % 2; 2]), 0.0).unwrap();
        }
        for q in &queries {
            prop_assert_eq!(store.nearest(q).unwrap(), store.nearest_linear(q).unwrap());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bnb_agrees_with_enumeration(x0 in state(), horizon in 1usize..5) {
        let ocp = cart1(horizon);
        let bnb = solve_bnb(&ocp, &x0, None, &BnbConfig::exact());
        let all = enumerate_exhaustive(&ocp, &x0);
        match (bnb, all) {
            (Ok(b), Ok(e)) => {
                prop_assert!((b.objective - e.objective).abs() <= 1e-6, "{} vs {}", b.objective, e.objective);
                prop_assert!(check_solution(&ocp, &x0, &b).is_sound(1e-6));
            }
            (Err(MiqpError::InfeasibleProblem), Err(MiqpError::InfeasibleProblem)) => {}
            (b, e) => prop_assert!(false, "disagreement: {:?} vs {:?}", b.map(|s| s.objective), e.map(|s| s.objective)),
        }
    }

    #[test]
    fn warm_starts_never_change_the_optimum(x0 in state(), code in 0usize..16) {
        let ocp = cart1(4);
        let warm = ModeSequence::new((0..4).map(|t| (code >> (3 - t)) & 1).collect());
        let cold = solve_bnb(&ocp, &x0, None, &BnbConfig::exact());
        let hot = solve_bnb(&ocp, &x0, Some(&warm), &BnbConfig::exact());
        match (cold, hot) {
            (Ok(c), Ok(h)) => prop_assert!((c.objective - h.objective).abs() <= 1e-6),
            (Err(MiqpError::InfeasibleProblem), Err(MiqpError::InfeasibleProblem)) => {}
            (c, h) => prop_assert!(false, "disagreement: {:?} vs {:?}", c.map(|s| s.objective), h.map(|s| s.objective)),
        }
    }

    #[test]
    fn early_stop_is_feasible_and_no_better_than_optimal(x0 in state()) {
        let ocp = cart1(6);
        if let Ok(best) = solve_bnb(&ocp, &x0, None, &BnbConfig::exact()) {
            let first = solve_bnb(&ocp, &x0, None, &BnbConfig::first_feasible()).unwrap();
            prop_assert!(check_solution(&ocp, &x0, &first).is_sound(1e-6));
            prop_assert!(first.objective >= best.objective - 1e-6);
            prop_assert!(first.objective - first.gap * first.objective.abs().max(1.0) <= best.objective + 1e-6);
        }
    }
}
