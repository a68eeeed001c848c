use nalgebra::DVector;

use lnms_core::bench::{EnvId, EnvSpec, Environment};
use lnms_core::miqp::{check_solution, enumerate_exhaustive, solve_bnb, BnbConfig, MiqpError, MiqpStatus, ModeSequence};
use lnms_core::qp::{assemble_fixed_mode_ocp, solve_qp, QpSettings, QpStatus};
use lnms_core::HybridOcp;

fn cart1(horizon: usize) -> HybridOcp {
    let spec = EnvSpec {
        horizon: Some(horizon),
        ..Default::default()
    };
    Environment::build(EnvId::Cart1, &spec).unwrap().ocp
}

fn x(a: f64, b: f64) -> DVector<f64> {
    DVector::from_column_slice(&[a, b])
}

#[test]
fn four_step_cart_matches_enumeration() {
    let ocp = cart1(4);
    let x0 = x(0.2, 0.0);
    let bnb = solve_bnb(&ocp, &x0, None, &BnbConfig::exact()).unwrap();
    let all = enumerate_exhaustive(&ocp, &x0).unwrap();
    assert_eq!(bnb.status, MiqpStatus::Optimal);
    assert!((bnb.objective - all.objective).abs() < 1e-6);
    assert_eq!(all.qp_solves, 16);
    assert!(check_solution(&ocp, &x0, &bnb).is_sound(1e-6));
}

#[test]
fn origin_costs_nothing_in_the_free_mode() {
    let ocp = cart1(5);
    let sol = solve_bnb(&ocp, &x(0.0, 0.0), None, &BnbConfig::exact()).unwrap();
    assert!(sol.objective.abs() < 1e-9);
    assert_eq!(sol.modes, ModeSequence::constant(0, 5));
}

#[test]
fn feasible_warm_start_stops_immediately() {
    let ocp = cart1(10);
    let x0 = x(0.3, 1.0);
    let warm = ModeSequence::constant(0, 10);
    let sol = solve_bnb(&ocp, &x0, Some(&warm), &BnbConfig::first_feasible()).unwrap();
    assert_eq!(sol.status, MiqpStatus::FeasibleEarlyStop);
    assert_eq!(sol.nodes_explored, 0);
    assert_eq!(sol.modes, warm);
    let qp = solve_qp(&assemble_fixed_mode_ocp(&ocp, &warm, &x0).unwrap(), &QpSettings::default()).unwrap();
    assert_eq!(qp.status, QpStatus::Optimal);
    assert!((sol.objective - qp.objective).abs() < 1e-9);
}

#[test]
fn one_step_enumeration_solves_one_qp_per_mode() {
    let ocp = cart1(1);
    let sol = enumerate_exhaustive(&ocp, &x(0.5, 0.0)).unwrap();
    assert_eq!(sol.qp_solves, 2);
}

#[test]
fn states_outside_the_box_are_infeasible() {
    let ocp = cart1(4);
    let out = x(1.5, 0.0);
    assert!(matches!(solve_bnb(&ocp, &out, None, &BnbConfig::exact()), Err(MiqpError::InfeasibleProblem)));
    assert!(matches!(enumerate_exhaustive(&ocp, &out), Err(MiqpError::InfeasibleProblem)));
}

#[test]
fn wall_impact_is_planned_when_approaching_fast() {
    let ocp = cart1(10);
    let sol = solve_bnb(&ocp, &x(0.7, 8.0), None, &BnbConfig::exact()).unwrap();
    assert!(sol.modes.as_slice().contains(&1), "{}", sol.modes);
    let res = check_solution(&ocp, &x(0.7, 8.0), &sol);
    assert!(res.is_sound(1e-6), "{res:?}");
}

#[test]
fn limits_report_their_status_and_a_sound_incumbent() {
    let ocp = cart1(10);
    let x0 = x(0.7, 8.0);
    let warm = solve_bnb(&ocp, &x0, None, &BnbConfig::first_feasible()).unwrap().modes;
    let config = BnbConfig {
        node_limit: Some(2),
        gap_tol: 0.0,
        ..BnbConfig::default()
    };
    let sol = solve_bnb(&ocp, &x0, Some(&warm), &config).unwrap();
    assert_eq!(sol.status, MiqpStatus::NodeLimit);
    assert_eq!(sol.nodes_explored, 2);
    assert!(sol.gap >= 0.0);
    assert!(check_solution(&ocp, &x0, &sol).is_sound(1e-6));

    let cold = BnbConfig {
        node_limit: Some(0),
        ..BnbConfig::default()
    };
    assert!(matches!(
        solve_bnb(&ocp, &x0, None, &cold),
        Err(MiqpError::NoSolutionWithinLimits { nodes_explored: 0, .. })
    ));
}

#[test]
fn recorded_tree_is_rooted_and_consistent() {
    let ocp = cart1(6);
    let config = BnbConfig {
        record_tree: true,
        ..BnbConfig::exact()
    };
    let sol = solve_bnb(&ocp, &x(0.72, 3.0), None, &config).unwrap();
    let tree = sol.tree.unwrap();
    assert_eq!(tree.len(), sol.nodes_explored);
    assert_eq!(tree[0].parent, None);
    assert_eq!(tree[0].depth, 0);
    for node in &tree[1..] {
        let parent = &tree[node.parent.unwrap()];
        assert!(parent.id < node.id);
        assert_eq!(parent.depth + 1, node.depth);
        // Children are at least as constrained as their parents.
        if let (Some(p), Some(c)) = (parent.relaxation, node.relaxation) {
            assert!(c >= p - 1e-6 * p.abs().max(1.0), "{c} < {p}");
        }
    }
}
