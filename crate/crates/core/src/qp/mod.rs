//! Dense convex quadratic programs.
//!
//! Problems have the form
//!
//! ```text
//! minimize    ½ zᵀ H z + gᵀ z + constant
//! subject to  A_eq z  = b_eq
//!             A_in z ≤ b_in
//! ```
//!
//! [`solve_qp`] runs a primal-dual interior-point method and falls back to an
//! auxiliary slack problem to certify infeasibility. [`kkt_residuals`] is an
//! independent checker that does not share code with the solver.

mod ipm;
mod kkt;
pub(crate) mod ocp;

use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ipm::QpSolver;
pub use kkt::{kkt_residuals, KktResiduals};
pub use ocp::assemble_fixed_mode_ocp;

/// Errors raised while setting up a QP.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
}

pub type QpResult<T> = Result<T, QpError>;

/// A convex QP in dense storage.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseQp {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
    /// Constant added to the reported objective.
    pub constant: f64,
}

impl DenseQp {
    /// An unconstrained QP with the given cost.
    pub fn unconstrained(h: DMatrix<f64>, g: DVector<f64>) -> Self {
        let n = g.len();
        Self {
            h,
            g,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            a_in: DMatrix::zeros(0, n),
            b_in: DVector::zeros(0),
            constant: 0.0,
        }
    }

    /// A linear program `min cᵀz s.t. A z ≤ b`.
    pub fn linear(c: DVector<f64>, a_in: DMatrix<f64>, b_in: DVector<f64>) -> Self {
        let n = c.len();
        Self {
            h: DMatrix::zeros(n, n),
            g: c,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            a_in,
            b_in,
            constant: 0.0,
        }
    }

    pub fn with_equalities(mut self, a_eq: DMatrix<f64>, b_eq: DVector<f64>) -> Self {
        self.a_eq = a_eq;
        self.b_eq = b_eq;
        self
    }

    pub fn with_inequalities(mut self, a_in: DMatrix<f64>, b_in: DVector<f64>) -> Self {
        self.a_in = a_in;
        self.b_in = b_in;
        self
    }

    pub fn num_vars(&self) -> usize {
        self.g.len()
    }

    pub fn num_eq(&self) -> usize {
        self.b_eq.len()
    }

    pub fn num_in(&self) -> usize {
        self.b_in.len()
    }

    /// Objective value including the constant term.
    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.h * z)) + self.g.dot(z) + self.constant
    }

    /// Checks dimensions, finiteness and symmetry of `H`.
    pub fn validate(&self) -> QpResult<()> {
        let n = self.g.len();
        if self.h.nrows() != n || self.h.ncols() != n {
            return Err(QpError::DimensionMismatch(format!(
                "H is {}x{}, expected {n}x{n}",
                self.h.nrows(),
                self.h.ncols()
            )));
        }
        if self.a_eq.ncols() != n || self.a_eq.nrows() != self.b_eq.len() {
            return Err(QpError::DimensionMismatch(format!(
                "A_eq is {}x{} with {} right-hand sides",
                self.a_eq.nrows(),
                self.a_eq.ncols(),
                self.b_eq.len()
            )));
        }
        if self.a_in.ncols() != n || self.a_in.nrows() != self.b_in.len() {
            return Err(QpError::DimensionMismatch(format!(
                "A_in is {}x{} with {} right-hand sides",
                self.a_in.nrows(),
                self.a_in.ncols(),
                self.b_in.len()
            )));
        }
        let finite = |m: &[f64]| m.iter().all(|v| v.is_finite());
        if !finite(self.h.as_slice()) {
            return Err(QpError::NonFinite("H"));
        }
        if !finite(self.g.as_slice()) {
            return Err(QpError::NonFinite("g"));
        }
        if !finite(self.a_eq.as_slice()) || !finite(self.b_eq.as_slice()) {
            return Err(QpError::NonFinite("equality constraints"));
        }
        if !finite(self.a_in.as_slice()) || !finite(self.b_in.as_slice()) {
            return Err(QpError::NonFinite("inequality constraints"));
        }
        let asym = (&self.h - self.h.transpose()).amax();
        if asym > 1e-12 * self.h.amax().max(1.0) {
            return Err(QpError::DimensionMismatch(format!(
                "H is not symmetric (max asymmetry {asym:e})"
            )));
        }
        Ok(())
    }

    /// Writes the problem in a plain whitespace-separated matrix format.
    ///
    /// Each block starts with a header line `name rows cols`, followed by one
    /// line per row. Blocks appear in the order `H g A_eq b_eq A_in b_in`,
    /// then a final `constant <value>` line.
    pub fn write_plain<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        fn block<W: Write>(out: &mut W, name: &str, m: &DMatrix<f64>) -> std::io::Result<()> {
            writeln!(out, "{name} {} {}", m.nrows(), m.ncols())?;
            for i in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.17e}", m[(i, j)])).collect();
                writeln!(out, "{}", row.join(" "))?;
            }
            Ok(())
        }
        let col = |v: &DVector<f64>| DMatrix::from_column_slice(v.len(), 1, v.as_slice());
        block(&mut out, "H", &self.h)?;
        block(&mut out, "g", &col(&self.g))?;
        block(&mut out, "A_eq", &self.a_eq)?;
        block(&mut out, "b_eq", &col(&self.b_eq))?;
        block(&mut out, "A_in", &self.a_in)?;
        block(&mut out, "b_in", &col(&self.b_in))?;
        writeln!(out, "constant {:.17e}", self.constant)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

impl fmt::Display for QpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            QpStatus::Optimal => "optimal",
            QpStatus::Infeasible => "infeasible",
            QpStatus::MaxIter => "max_iter",
        };
        f.write_str(s)
    }
}

/// Farkas-type certificate: multipliers `y_eq` (free) and `y_in ≥ 0` with
/// `A_eqᵀ y_eq + A_inᵀ y_in = 0` and `b_eqᵀ y_eq + b_inᵀ y_in < 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfeasibilityCertificate {
    pub y_eq: DVector<f64>,
    pub y_in: DVector<f64>,
    /// Optimal value of the auxiliary slack problem (positive when infeasible).
    pub min_slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: DVector<f64>,
    pub lambda_eq: DVector<f64>,
    pub lambda_in: DVector<f64>,
    pub objective: f64,
    pub status: QpStatus,
    pub iterations: usize,
    /// Wall-clock seconds spent in the solver.
    pub solve_time: f64,
    pub certificate: Option<InfeasibilityCertificate>,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

/// Solver tolerances and limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpSettings {
    pub max_iter: usize,
    /// Bound on `‖Hz + g + A_eqᵀλ_eq + A_inᵀλ_in‖_∞` for an optimal point.
    pub tol_stationarity: f64,
    /// Bound on the largest constraint violation for an optimal point.
    pub tol_feasibility: f64,
    /// Bound on `max_i |λ_i (b_i − a_iᵀz)|` for an optimal point.
    pub tol_complementarity: f64,
    /// Minimum auxiliary slack that certifies infeasibility.
    pub infeasibility_threshold: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            max_iter: 120,
            tol_stationarity: 1e-8,
            tol_feasibility: 1e-8,
            tol_complementarity: 1e-8,
            infeasibility_threshold: 1e-7,
        }
    }
}

/// Solves `qp` with a fresh solver instance.
pub fn solve_qp(qp: &DenseQp, settings: &QpSettings) -> QpResult<QpSolution> {
    QpSolver::new(*settings).solve(qp)
}

/// Outcome of [`check_feasibility`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub feasible: bool,
    /// Largest constraint violation at the best point found.
    pub max_violation: f64,
    pub point: DVector<f64>,
}

/// Largest violation of the constraints of `qp` at `z` (0 when feasible).
pub fn max_violation(qp: &DenseQp, z: &DVector<f64>) -> f64 {
    let mut worst = 0.0_f64;
    let eq = &qp.a_eq * z - &qp.b_eq;
    for v in eq.iter() {
        worst = worst.max(v.abs());
    }
    let ineq = &qp.a_in * z - &qp.b_in;
    for v in ineq.iter() {
        worst = worst.max(*v);
    }
    worst
}

/// Threshold below which a point counts as feasible.
pub const FEASIBILITY_TOL: f64 = 1e-7;

/// Decides feasibility of the constraint set of `qp`, ignoring its cost.
pub fn check_feasibility(qp: &DenseQp) -> QpResult<FeasibilityReport> {
    qp.validate()?;
    let mut solver = QpSolver::new(QpSettings::default());
    let (point, _) = solver.min_slack_point(qp);
    let violation = max_violation(qp, &point);
    Ok(FeasibilityReport {
        feasible: violation < FEASIBILITY_TOL,
        max_violation: violation,
        point,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn unconstrained_identity_hessian_has_zero_minimizer() {
        let qp = DenseQp::unconstrained(DMatrix::identity(3, 3) * 2.0, DVector::zeros(3));
        let sol = solve_qp(&qp, &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!(sol.z.amax() < 1e-12);
        assert!(sol.objective.abs() < 1e-12);
    }

    #[test]
    fn scalar_bound_active() {
        // min z² − 2z s.t. z ≤ 0: stationarity 2z − 2 + λ = 0 at z = 0 gives λ = 2.
        let qp = DenseQp::unconstrained(scalar(2.0), DVector::from_element(1, -2.0))
            .with_inequalities(scalar(1.0), DVector::zeros(1));
        let sol = solve_qp(&qp, &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!(sol.z[0].abs() < 1e-8, "z = {}", sol.z[0]);
        assert!((sol.lambda_in[0] - 2.0).abs() < 1e-7, "λ = {}", sol.lambda_in[0]);
        assert!(sol.objective.abs() < 1e-8);
    }

    #[test]
    fn contradictory_bounds_are_infeasible_with_certificate() {
        let a = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        let b = DVector::from_column_slice(&[0.0, -1.0]);
        let qp = DenseQp::unconstrained(scalar(2.0), DVector::zeros(1)).with_inequalities(a.clone(), b.clone());
        let sol = solve_qp(&qp, &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Infeasible);
        let cert = sol.certificate.expect("certificate");
        assert!(cert.y_in.iter().all(|&y| y >= -1e-12));
        let combo = a.transpose() * &cert.y_in;
        assert!(combo.amax() < 1e-8 * cert.y_in.amax().max(1.0));
        assert!(b.dot(&cert.y_in) < 0.0);
        assert!(cert.min_slack > 1e-7);
    }

    #[test]
    fn feasibility_check_basic_cases() {
        let free = DenseQp::unconstrained(DMatrix::identity(2, 2), DVector::zeros(2));
        let rep = check_feasibility(&free).unwrap();
        assert!(rep.feasible);
        assert_eq!(rep.max_violation, 0.0);

        let a = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        let b = DVector::from_column_slice(&[0.0, -1.0]);
        let bad = DenseQp::unconstrained(scalar(0.0), DVector::zeros(1)).with_inequalities(a, b);
        let rep = check_feasibility(&bad).unwrap();
        assert!(!rep.feasible);
        assert!(rep.max_violation > 0.4);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let qp = DenseQp::unconstrained(DMatrix::identity(2, 2), DVector::zeros(3));
        assert!(matches!(
            solve_qp(&qp, &QpSettings::default()),
            Err(QpError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn plain_dump_has_all_blocks() {
        let qp = DenseQp::unconstrained(scalar(2.0), DVector::from_element(1, -2.0))
            .with_inequalities(scalar(1.0), DVector::zeros(1));
        let mut buf = Vec::new();
        qp.write_plain(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        for header in ["H 1 1", "g 1 1", "A_eq 0 1", "b_eq 0 1", "A_in 1 1", "b_in 1 1", "constant"] {
            assert!(text.contains(header), "missing {header}");
        }
    }
}
