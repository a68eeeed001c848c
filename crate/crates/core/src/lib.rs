//! Hybrid model predictive control with learned mode sequences.
//!
//! * [`pwa`]: piecewise-affine systems, benchmark models, Riccati and
//!   invariant-set tools.
//! * [`qp`]: dense convex QP solver and the fixed-mode control problem.
//! * [`miqp`]: the mixed-integer formulation, branch-and-bound and an
//!   enumeration oracle.
//! * [`lnms`]: the nearest-neighbor sample store, the online controller and
//!   offline relabeling.
//! * [`bench`]: environments, closed-loop rollouts and experiments.

pub mod bench;
pub mod lnms;
pub mod miqp;
pub mod pwa;
pub mod qp;

pub use miqp::{solve_bnb, BnbConfig, HybridOcp, MiqpError, MiqpSolution, MiqpStatus, ModeSequence};
pub use pwa::{Polytope, PwaMode, PwaSystem};
pub use qp::{solve_qp, DenseQp, QpSettings, QpSolution, QpStatus};
pub use lnms::{improve_samples, LnmsController, SampleStore};
