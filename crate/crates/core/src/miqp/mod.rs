//! Hybrid optimal control as a mixed-integer QP.
//!
//! The mode at each horizon step is encoded by binaries `μ_{t,i}` with
//! `Σ_i μ_{t,i} = 1`; dynamics and guards of mode `i` are enforced through
//! big-M constraints that relax by `(1 − μ_{t,i}) M`. [`solve_bnb`] solves the
//! problem by best-first branch-and-bound over the binaries and
//! [`enumerate_exhaustive`] is a brute-force oracle over all mode sequences.

mod bigm;
mod bnb;
mod check;
mod enumerate;
mod formulation;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pwa::{Polytope, PwaSystem};
use crate::qp::QpError;

pub use bigm::compute_big_m;
pub use bnb::{solve_bnb, NodeRecord};
pub use check::{check_solution, SolutionResiduals};
pub use enumerate::{enumerate_exhaustive, MAX_ENUMERATED_SEQUENCES};

/// Default tightening of guard rows inside the optimization problem. It keeps
/// planned states strictly inside the guard of their planned mode, so the
/// simulator's lowest-index tie-break agrees with the plan.
pub const DEFAULT_GUARD_MARGIN: f64 = 1e-6;
/// A binary counts as integral when this close to 0 or 1.
pub const INTEGRALITY_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MiqpError {
    #[error("no mode sequence admits a feasible solution")]
    InfeasibleProblem,
    #[error("no feasible solution found within limits after {nodes_explored} nodes ({solve_time:.3} s)")]
    NoSolutionWithinLimits { nodes_explored: usize, solve_time: f64 },
    #[error("state or input box is unbounded")]
    UnboundedBox,
    #[error("{count} mode sequences exceed the enumeration limit")]
    TooManySequences { count: f64 },
    #[error("invalid mode sequence: {0}")]
    InvalidModeSequence(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error(transparent)]
    Qp(#[from] QpError),
}

pub type MiqpResult<T> = Result<T, MiqpError>;

/// One mode index per horizon step (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModeSequence(pub Vec<usize>);

impl ModeSequence {
    pub fn new(modes: Vec<usize>) -> Self {
        Self(modes)
    }

    /// The same mode at every step.
    pub fn constant(mode: usize, horizon: usize) -> Self {
        Self(vec![mode; horizon])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// `μ` as an `N × n_M` one-hot matrix.
    pub fn one_hot(&self, num_modes: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.0.len(), num_modes);
        for (t, &i) in self.0.iter().enumerate() {
            m[(t, i)] = 1.0;
        }
        m
    }

    /// Reads a sequence back from a one-hot matrix; rejects rows that do not
    /// contain exactly one 1.
    pub fn from_one_hot(mu: &DMatrix<f64>) -> MiqpResult<Self> {
        let mut seq = Vec::with_capacity(mu.nrows());
        for t in 0..mu.nrows() {
            let row = mu.row(t);
            let ones: Vec<usize> = (0..mu.ncols()).filter(|&i| row[i] == 1.0).collect();
            let zeros = (0..mu.ncols()).filter(|&i| row[i] == 0.0).count();
            if ones.len() != 1 || zeros + 1 != mu.ncols() {
                return Err(MiqpError::InvalidModeSequence(format!("row {t} is not one-hot")));
            }
            seq.push(ones[0]);
        }
        Ok(Self(seq))
    }

    pub fn validate(&self, horizon: usize, num_modes: usize) -> MiqpResult<()> {
        if self.0.len() != horizon {
            return Err(MiqpError::InvalidModeSequence(format!(
                "length {} differs from horizon {horizon}",
                self.0.len()
            )));
        }
        if let Some(&bad) = self.0.iter().find(|&&m| m >= num_modes) {
            return Err(MiqpError::InvalidModeSequence(format!(
                "mode {bad} out of range for {num_modes} modes"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for ModeSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|m| m.to_string()).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// Finite-horizon hybrid optimal control problem.
#[derive(Debug, Clone)]
pub struct HybridOcp {
    pub system: Arc<PwaSystem>,
    pub horizon: usize,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub p_term: DMatrix<f64>,
    pub big_m: f64,
    pub terminal_set: Option<Polytope>,
    /// Amount by which guard rows of steps `t ≥ 1` are tightened in the
    /// optimization problem. The first step is left exact since `x_0` is given.
    pub guard_margin: f64,
}

impl HybridOcp {
    /// Builds the problem and sizes `big_m` with [`compute_big_m`].
    pub fn new(
        system: Arc<PwaSystem>,
        horizon: usize,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        p_term: DMatrix<f64>,
    ) -> MiqpResult<Self> {
        let mut ocp = Self {
            system,
            horizon,
            q,
            r,
            p_term,
            big_m: 1.0,
            terminal_set: None,
            guard_margin: DEFAULT_GUARD_MARGIN,
        };
        ocp.validate_shapes()?;
        ocp.big_m = compute_big_m(&ocp)?;
        Ok(ocp)
    }

    pub fn with_terminal_set(mut self, set: Polytope) -> MiqpResult<Self> {
        if set.num_rows() > 0 && set.dim() != self.system.n_x() {
            return Err(MiqpError::InvalidProblem(format!(
                "terminal set lives in R^{} but the state is in R^{}",
                set.dim(),
                self.system.n_x()
            )));
        }
        self.terminal_set = Some(set);
        self.big_m = compute_big_m(&self)?;
        Ok(self)
    }

    pub fn with_big_m(mut self, big_m: f64) -> MiqpResult<Self> {
        if !(big_m > 0.0 && big_m.is_finite()) {
            return Err(MiqpError::InvalidProblem(format!("big-M must be positive, got {big_m}")));
        }
        self.big_m = big_m;
        Ok(self)
    }

    pub fn num_modes(&self) -> usize {
        self.system.num_modes()
    }

    pub(crate) fn guard_margin_at(&self, t: usize) -> f64 {
        if t == 0 {
            0.0
        } else {
            self.guard_margin
        }
    }

    fn validate_shapes(&self) -> MiqpResult<()> {
        let nx = self.system.n_x();
        let nu = self.system.n_u();
        if self.horizon == 0 {
            return Err(MiqpError::InvalidProblem("horizon must be at least 1".into()));
        }
        for (name, m, n) in [("Q", &self.q, nx), ("R", &self.r, nu), ("P", &self.p_term, nx)] {
            if m.shape() != (n, n) {
                return Err(MiqpError::InvalidProblem(format!("{name} must be {n}x{n}, got {:?}", m.shape())));
            }
            if (m - m.transpose()).amax() > 1e-9 * m.amax().max(1.0) {
                return Err(MiqpError::InvalidProblem(format!("{name} must be symmetric")));
            }
        }
        let r_min = self.r.symmetric_eigenvalues().min();
        if !(r_min > 0.0) {
            return Err(MiqpError::InvalidProblem("R must be positive definite".into()));
        }
        for (name, m) in [("Q", &self.q), ("P", &self.p_term)] {
            if m.symmetric_eigenvalues().min() < -1e-9 * m.amax().max(1.0) {
                return Err(MiqpError::InvalidProblem(format!("{name} must be positive semidefinite")));
            }
        }
        Ok(())
    }

    /// Cost of a trajectory: `Σ xᵀQx + uᵀRu + x_NᵀPx_N`.
    pub fn trajectory_cost(&self, x: &[DVector<f64>], u: &[DVector<f64>]) -> f64 {
        let mut cost = 0.0;
        for t in 0..self.horizon {
            cost += x[t].dot(&(&self.q * &x[t])) + u[t].dot(&(&self.r * &u[t]));
        }
        cost + x[self.horizon].dot(&(&self.p_term * &x[self.horizon]))
    }
}

/// Branch-and-bound limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BnbConfig {
    /// Seconds; `None` means unlimited.
    pub time_limit: Option<f64>,
    /// Relative optimality gap at which the search stops.
    pub gap_tol: f64,
    /// Return as soon as any feasible solution is known.
    pub stop_at_first_feasible: bool,
    pub node_limit: Option<usize>,
    /// Keep a record of every explored node in the solution.
    #[serde(skip)]
    pub record_tree: bool,
}

impl Default for BnbConfig {
    fn default() -> Self {
        Self {
            time_limit: None,
            gap_tol: 1e-6,
            stop_at_first_feasible: false,
            node_limit: None,
            record_tree: false,
        }
    }
}

impl BnbConfig {
    /// Search to proven optimality with no limits.
    pub fn exact() -> Self {
        Self {
            gap_tol: 0.0,
            ..Self::default()
        }
    }

    /// Stop at the first feasible solution.
    pub fn first_feasible() -> Self {
        Self {
            stop_at_first_feasible: true,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiqpStatus {
    Optimal,
    FeasibleEarlyStop,
    Infeasible,
    TimeLimit,
    NodeLimit,
}

impl MiqpStatus {
    pub fn has_solution(self) -> bool {
        !matches!(self, MiqpStatus::Infeasible)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiqpSolution {
    pub modes: ModeSequence,
    /// Inputs `u_0 … u_{N−1}`.
    pub u: Vec<DVector<f64>>,
    /// States `x_0 … x_N`, with `x_0` the initial state.
    pub x: Vec<DVector<f64>>,
    pub objective: f64,
    /// `(incumbent − best bound) / max(1, |incumbent|)`.
    pub gap: f64,
    pub status: MiqpStatus,
    pub nodes_explored: usize,
    /// Number of QPs solved, relaxations and fixed-mode problems together.
    pub qp_solves: usize,
    pub solve_time: f64,
    pub warm_started: bool,
    pub warm_start_feasible: bool,
    pub tree: Option<Vec<NodeRecord>>,
}

impl MiqpSolution {
    pub fn stats(&self) -> SolveStats {
        SolveStats {
            status: self.status,
            objective: self.objective,
            gap: self.gap,
            nodes: self.nodes_explored,
            time_s: self.solve_time,
            warm_started: self.warm_started,
            warm_start_feasible: self.warm_start_feasible,
        }
    }
}

/// JSON record of one solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub status: MiqpStatus,
    pub objective: f64,
    pub gap: f64,
    pub nodes: usize,
    pub time_s: f64,
    pub warm_started: bool,
    pub warm_start_feasible: bool,
}
