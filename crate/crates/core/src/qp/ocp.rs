//! The hybrid OCP with every mode fixed, as a dense QP.

use nalgebra::{DMatrix, DVector};

use super::DenseQp;
use crate::miqp::{HybridOcp, MiqpError, MiqpResult, ModeSequence};

/// Column layout `z = (u_0 … u_{N−1}, x_1 … x_N [, μ_0 … μ_{N−1}])`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub n_x: usize,
    pub n_u: usize,
    pub n_m: usize,
    pub horizon: usize,
}

impl Layout {
    pub fn of(ocp: &HybridOcp) -> Self {
        Self {
            n_x: ocp.system.n_x(),
            n_u: ocp.system.n_u(),
            n_m: ocp.num_modes(),
            horizon: ocp.horizon,
        }
    }

    pub fn u(&self, t: usize) -> usize {
        t * self.n_u
    }

    /// Column of `x_t` for `t ≥ 1`.
    pub fn x(&self, t: usize) -> usize {
        debug_assert!(t >= 1);
        self.horizon * self.n_u + (t - 1) * self.n_x
    }

    pub fn continuous(&self) -> usize {
        self.horizon * (self.n_u + self.n_x)
    }

    /// Splits a solution vector into state and input trajectories.
    pub fn trajectory(&self, x_p: &DVector<f64>, z: &DVector<f64>) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let mut xs = Vec::with_capacity(self.horizon + 1);
        xs.push(x_p.clone());
        for t in 1..=self.horizon {
            xs.push(z.rows(self.x(t), self.n_x).into_owned());
        }
        let us = (0..self.horizon).map(|t| z.rows(self.u(t), self.n_u).into_owned()).collect();
        (xs, us)
    }
}

/// Dense row buffer used while assembling constraint blocks.
pub(crate) struct RowBuilder {
    pub ncols: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
    pub rhs: Vec<f64>,
}

impl RowBuilder {
    pub fn new(ncols: usize) -> Self {
        Self {
            ncols,
            rows: Vec::new(),
            rhs: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push(row);
        self.rhs.push(rhs);
    }

    pub fn into_dense(self) -> (DMatrix<f64>, DVector<f64>) {
        let mut a = DMatrix::zeros(self.rows.len(), self.ncols);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                a[(i, j)] += v;
            }
        }
        (a, DVector::from_vec(self.rhs))
    }
}

/// Cost blocks shared by the fixed-mode and relaxed problems.
pub(crate) fn cost(ocp: &HybridOcp, layout: &Layout, n: usize, x_p: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>, f64) {
    let mut h = DMatrix::zeros(n, n);
    for t in 0..layout.horizon {
        let c = layout.u(t);
        h.view_mut((c, c), (layout.n_u, layout.n_u)).copy_from(&(&ocp.r * 2.0));
    }
    for t in 1..=layout.horizon {
        let c = layout.x(t);
        let w = if t == layout.horizon { &ocp.p_term } else { &ocp.q };
        h.view_mut((c, c), (layout.n_x, layout.n_x)).copy_from(&(w * 2.0));
    }
    let constant = x_p.dot(&(&ocp.q * x_p));
    (h, DVector::zeros(n), constant)
}

/// Bounds on `u_t` and `x_t`, the initial-state box and the terminal set.
pub(crate) fn box_and_terminal_rows(ocp: &HybridOcp, layout: &Layout, x_p: &DVector<f64>, rows: &mut RowBuilder) {
    let sys = &ocp.system;
    for k in 0..layout.n_x {
        rows.push(Vec::new(), sys.x_max()[k] - x_p[k]);
        rows.push(Vec::new(), x_p[k] - sys.x_min()[k]);
    }
    for t in 0..layout.horizon {
        for k in 0..layout.n_u {
            rows.push(vec![(layout.u(t) + k, 1.0)], sys.u_max()[k]);
            rows.push(vec![(layout.u(t) + k, -1.0)], -sys.u_min()[k]);
        }
    }
    for t in 1..=layout.horizon {
        for k in 0..layout.n_x {
            rows.push(vec![(layout.x(t) + k, 1.0)], sys.x_max()[k]);
            rows.push(vec![(layout.x(t) + k, -1.0)], -sys.x_min()[k]);
        }
    }
    if let Some(set) = &ocp.terminal_set {
        let c = layout.x(layout.horizon);
        for r in 0..set.num_rows() {
            let row = (0..layout.n_x)
                .filter(|&k| set.f[(r, k)] != 0.0)
                .map(|k| (c + k, set.f[(r, k)]))
                .collect();
            rows.push(row, set.g[r]);
        }
    }
}

/// `coef · (A x_t + B u_t)` as sparse entries, with `x_0` folded into the
/// returned constant.
pub(crate) fn affine_terms(
    layout: &Layout,
    t: usize,
    a_row: &[f64],
    b_row: &[f64],
    coef: f64,
    x_p: &DVector<f64>,
) -> (Vec<(usize, f64)>, f64) {
    let mut row = Vec::new();
    let mut constant = 0.0;
    for (k, &v) in a_row.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        if t == 0 {
            constant += coef * v * x_p[k];
        } else {
            row.push((layout.x(t) + k, coef * v));
        }
    }
    for (k, &v) in b_row.iter().enumerate() {
        if v != 0.0 {
            row.push((layout.u(t) + k, coef * v));
        }
    }
    (row, constant)
}

/// Assembles the convex QP obtained by fixing the mode of every step.
///
/// Decision vector `z = (u_0 … u_{N−1}, x_1 … x_N)`; equalities carry the
/// dynamics of the fixed modes, inequalities their (tightened) guards, the
/// state and input boxes and the optional terminal set.
pub fn assemble_fixed_mode_ocp(ocp: &HybridOcp, modes: &ModeSequence, x_p: &DVector<f64>) -> MiqpResult<DenseQp> {
    let layout = Layout::of(ocp);
    modes.validate(layout.horizon, layout.n_m)?;
    if x_p.len() != layout.n_x {
        return Err(MiqpError::InvalidProblem(format!(
            "initial state has length {}, expected {}",
            x_p.len(),
            layout.n_x
        )));
    }
    let n = layout.continuous();
    let sys = &ocp.system;
    let (h, g, constant) = cost(ocp, &layout, n, x_p);

    let mut eq = RowBuilder::new(n);
    for t in 0..layout.horizon {
        let mode = sys.mode(modes.0[t]);
        for r in 0..layout.n_x {
            let a_row: Vec<f64> = mode.a.row(r).iter().copied().collect();
            let b_row: Vec<f64> = mode.b.row(r).iter().copied().collect();
            // x_{t+1,r} − (A x_t + B u_t)_r = c_r
            let (mut row, constant) = affine_terms(&layout, t, &a_row, &b_row, -1.0, x_p);
            row.push((layout.x(t + 1) + r, 1.0));
            eq.push(row, mode.c[r] - constant);
        }
    }

    let mut ineq = RowBuilder::new(n);
    for t in 0..layout.horizon {
        let mode = sys.mode(modes.0[t]);
        for r in 0..mode.num_guards() {
            let h_row: Vec<f64> = mode.guard_h.row(r).iter().copied().collect();
            let j_row: Vec<f64> = mode.guard_j.row(r).iter().copied().collect();
            let (row, constant) = affine_terms(&layout, t, &h_row, &j_row, 1.0, x_p);
            ineq.push(row, mode.guard_k[r] - ocp.guard_margin_at(t) - constant);
        }
    }
    box_and_terminal_rows(ocp, &layout, x_p, &mut ineq);

    let (a_eq, b_eq) = eq.into_dense();
    let (a_in, b_in) = ineq.into_dense();
    Ok(DenseQp {
        h,
        g,
        a_eq,
        b_eq,
        a_in,
        b_in,
        constant,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::pwa::{build_cart_wall, solve_dare, CartWallParams};
    use crate::qp::{check_feasibility, solve_qp, QpSettings, QpStatus};

    fn cart_ocp(horizon: usize) -> HybridOcp {
        let sys = Arc::new(build_cart_wall(&CartWallParams::default()).unwrap());
        let q = DMatrix::identity(2, 2);
        let r = DMatrix::from_element(1, 1, 1e-3);
        let p = solve_dare(&sys.mode(0).a, &sys.mode(0).b, &q, &r).unwrap() * 1000.0;
        HybridOcp::new(sys, horizon, q, r, p).unwrap()
    }

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn origin_one_step_is_zero_cost() {
        let ocp = cart_ocp(1);
        let qp = assemble_fixed_mode_ocp(&ocp, &ModeSequence::constant(0, 1), &v(&[0.0, 0.0])).unwrap();
        let sol = solve_qp(&qp, &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!(sol.z[0].abs() < 1e-8);
        assert!(sol.objective.abs() < 1e-8);
    }

    #[test]
    fn pure_input_penalty_gives_zero_inputs() {
        let mut ocp = cart_ocp(2);
        ocp.q = DMatrix::zeros(2, 2);
        ocp.p_term = DMatrix::zeros(2, 2);
        ocp.r = DMatrix::identity(1, 1);
        let qp = assemble_fixed_mode_ocp(&ocp, &ModeSequence::constant(0, 2), &v(&[0.1, 0.5])).unwrap();
        let sol = solve_qp(&qp, &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!(sol.z.rows(0, 2).amax() < 1e-7);
    }

    #[test]
    fn matches_batch_least_squares_for_linear_dynamics() {
        // Condensed oracle: x = Φ x_p + Γ u, cost = uᵀ(R̄ + ΓᵀQ̄Γ)u + 2 uᵀΓᵀQ̄Φx_p + ...
        let ocp = cart_ocp(10);
        let x_p = v(&[0.05, 0.0]);
        let qp = assemble_fixed_mode_ocp(&ocp, &ModeSequence::constant(0, 10), &x_p).unwrap();
        let sol = solve_qp(&qp, &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);

        let (a, b) = (&ocp.system.mode(0).a, &ocp.system.mode(0).b);
        let n = 10;
        let mut phi = DMatrix::zeros(2 * n, 2);
        let mut gamma = DMatrix::zeros(2 * n, n);
        let mut ak = DMatrix::<f64>::identity(2, 2);
        for t in 0..n {
            ak = a * &ak;
            phi.view_mut((2 * t, 0), (2, 2)).copy_from(&ak);
            for s in 0..=t {
                let mut blk = b.clone();
                for _ in s..t {
                    blk = a * blk;
                }
                gamma.view_mut((2 * t, s), (2, 1)).copy_from(&blk);
            }
        }
        let mut qbar = DMatrix::zeros(2 * n, 2 * n);
        for t in 0..n {
            let w = if t == n - 1 { &ocp.p_term } else { &ocp.q };
            qbar.view_mut((2 * t, 2 * t), (2, 2)).copy_from(w);
        }
        let rbar = DMatrix::identity(n, n) * ocp.r[(0, 0)];
        let hess = &rbar + gamma.transpose() * &qbar * &gamma;
        let lin = gamma.transpose() * &qbar * &phi * &x_p;
        let u = -hess.clone().lu().solve(&lin).unwrap();
        let xs = &phi * &x_p + &gamma * &u;
        let oracle = x_p.dot(&(&ocp.q * &x_p)) + u.dot(&(&rbar * &u)) + xs.dot(&(&qbar * &xs));
        // The unconstrained optimum must respect the boxes for the comparison to hold.
        assert!(u.amax() < 100.0, "{}", u.amax());
        assert!((sol.objective - oracle).abs() < 1e-6 * oracle.abs().max(1.0), "{} vs {}", sol.objective, oracle);
    }

    #[test]
    fn deep_interior_state_is_feasible_for_free_modes() {
        let ocp = cart_ocp(10);
        let x_p = v(&[0.1, 0.5]);
        // Zero input keeps the cart clear of the wall for ten steps.
        let mut x = x_p.clone();
        for _ in 0..10 {
            let (next, mode) = ocp.system.simulate_step(&x, &v(&[0.0])).unwrap();
            assert_eq!(mode, 0);
            x = next;
        }
        let qp = assemble_fixed_mode_ocp(&ocp, &ModeSequence::constant(0, 10), &x_p).unwrap();
        assert!(check_feasibility(&qp).unwrap().feasible);
    }

    #[test]
    fn rejects_bad_sequences() {
        let ocp = cart_ocp(3);
        let x_p = v(&[0.0, 0.0]);
        assert!(matches!(
            assemble_fixed_mode_ocp(&ocp, &ModeSequence::constant(0, 2), &x_p),
            Err(MiqpError::InvalidModeSequence(_))
        ));
        assert!(matches!(
            assemble_fixed_mode_ocp(&ocp, &ModeSequence::constant(5, 3), &x_p),
            Err(MiqpError::InvalidModeSequence(_))
        ));
    }
}
