use super::{HybridOcp, MiqpError, MiqpResult};

const SAFETY_FACTOR: f64 = 1.1;

/// Range of `Σ_j coef_j v_j` over the box `lo ≤ v ≤ hi`.
fn interval(coefs: &[f64], lo: &[f64], hi: &[f64]) -> (f64, f64) {
    coefs
        .iter()
        .zip(lo.iter().zip(hi.iter()))
        .fold((0.0, 0.0), |(min, max), (&c, (&l, &h))| {
            let (a, b) = (c * l, c * h);
            (min + a.min(b), max + a.max(b))
        })
}

/// Sizes the big-M constant by interval arithmetic over the state and input
/// boxes: it bounds every dynamics residual `|x⁺ − A x − B u − c|` and every
/// tightened guard violation of every mode, times a safety factor of 1.1.
pub fn compute_big_m(ocp: &HybridOcp) -> MiqpResult<f64> {
    let sys = &ocp.system;
    let bounds = sys
        .x_min()
        .iter()
        .chain(sys.x_max().iter())
        .chain(sys.u_min().iter())
        .chain(sys.u_max().iter());
    if bounds.into_iter().any(|v| !v.is_finite()) {
        return Err(MiqpError::UnboundedBox);
    }
    // Joint box over (x, u).
    let lo: Vec<f64> = sys.x_min().iter().chain(sys.u_min().iter()).copied().collect();
    let hi: Vec<f64> = sys.x_max().iter().chain(sys.u_max().iter()).copied().collect();

    let mut worst = 0.0_f64;
    for mode in sys.modes() {
        for r in 0..sys.n_x() {
            let coefs: Vec<f64> = mode
                .a
                .row(r)
                .iter()
                .chain(mode.b.row(r).iter())
                .map(|v| -v)
                .collect();
            let (min, max) = interval(&coefs, &lo, &hi);
            let upper = sys.x_max()[r] + max - mode.c[r];
            let lower = sys.x_min()[r] + min - mode.c[r];
            worst = worst.max(upper.abs()).max(lower.abs());
        }
        for r in 0..mode.num_guards() {
            let coefs: Vec<f64> = mode.guard_h.row(r).iter().chain(mode.guard_j.row(r).iter()).copied().collect();
            let (_, max) = interval(&coefs, &lo, &hi);
            worst = worst.max(max - mode.guard_k[r] + ocp.guard_margin);
        }
    }
    if worst <= 0.0 {
        worst = 1.0;
    }
    Ok(SAFETY_FACTOR * worst)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use nalgebra::{DMatrix, DVector};

    use super::*;
    use crate::pwa::{build_cart_wall, CartWallParams, PwaMode, PwaSystem};

    fn trivial_system(scale: f64) -> PwaSystem {
        let mode = PwaMode {
            a: DMatrix::zeros(1, 1),
            b: DMatrix::zeros(1, 1),
            c: DVector::zeros(1),
            guard_h: DMatrix::zeros(0, 1),
            guard_j: DMatrix::zeros(0, 1),
            guard_k: DVector::zeros(0),
        };
        let b = |v: f64| DVector::from_element(1, v);
        PwaSystem::new(vec![mode], (b(-scale), b(scale)), (b(-scale), b(scale)), 0.1).unwrap()
    }

    fn ocp_for(sys: PwaSystem) -> HybridOcp {
        let nx = sys.n_x();
        let nu = sys.n_u();
        HybridOcp::new(
            Arc::new(sys),
            2,
            DMatrix::identity(nx, nx),
            DMatrix::identity(nu, nu),
            DMatrix::identity(nx, nx),
        )
        .unwrap()
    }

    #[test]
    fn zero_dynamics_unit_box() {
        let ocp = ocp_for(trivial_system(1.0));
        assert!((ocp.big_m - 1.1).abs() < 1e-12);
    }

    #[test]
    fn doubling_bounds_doubles_m() {
        let sys = build_cart_wall(&CartWallParams {
            x_wall: 0.0,
            ..Default::default()
        })
        .unwrap();
        let m1 = compute_big_m(&ocp_for(sys.clone())).unwrap();
        let doubled = sys
            .with_bounds(
                (sys.x_min() * 2.0, sys.x_max() * 2.0),
                (sys.u_min() * 2.0, sys.u_max() * 2.0),
            )
            .unwrap();
        let m2 = compute_big_m(&ocp_for(doubled)).unwrap();
        assert!(m2 >= 2.0 * m1 - 1e-9, "{m2} < 2·{m1}");
    }

    #[test]
    fn cart_m_dominates_sampled_residuals() {
        let params = CartWallParams {
            u_min: -10.0,
            u_max: 10.0,
            ..Default::default()
        };
        let sys = build_cart_wall(&params).unwrap();
        let ocp = ocp_for(sys.clone());
        assert!(ocp.big_m.is_finite());
        let grid = |lo: f64, hi: f64, k: usize| lo + (hi - lo) * k as f64 / 49.0;
        let mut worst = 0.0_f64;
        for i in 0..50 {
            for j in 0..50 {
                for l in 0..50 {
                    let x = DVector::from_column_slice(&[grid(-1.0, 1.0, i), grid(-10.0, 10.0, j)]);
                    let u = DVector::from_element(1, grid(-10.0, 10.0, l));
                    for mode in sys.modes() {
                        let image = mode.step(&x, &u);
                        // x⁺ ranges over the box corners.
                        for xp0 in [-1.0, 1.0] {
                            for xp1 in [-10.0, 10.0] {
                                worst = worst.max((xp0 - image[0]).abs()).max((xp1 - image[1]).abs());
                            }
                        }
                        worst = worst.max(mode.guard_violation(&x, &u));
                    }
                }
            }
        }
        assert!(ocp.big_m >= worst, "M = {} < {}", ocp.big_m, worst);
    }

    #[test]
    fn infinite_bounds_are_rejected() {
        let sys = trivial_system(1.0);
        let sys = sys
            .with_bounds(
                (DVector::from_element(1, f64::NEG_INFINITY), DVector::from_element(1, 1.0)),
                (DVector::from_element(1, -1.0), DVector::from_element(1, 1.0)),
            )
            .unwrap();
        let err = HybridOcp::new(
            Arc::new(sys),
            1,
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
        );
        assert!(matches!(err, Err(MiqpError::UnboundedBox)));
    }
}
