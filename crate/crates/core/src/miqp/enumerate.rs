use std::time::Instant;

use nalgebra::DVector;

use super::{HybridOcp, MiqpError, MiqpResult, MiqpSolution, MiqpStatus, ModeSequence};
use crate::qp::ocp::Layout;
use crate::qp::{assemble_fixed_mode_ocp, QpSettings, QpSolver, QpStatus};

/// Largest number of sequences [`enumerate_exhaustive`] agrees to try.
pub const MAX_ENUMERATED_SEQUENCES: f64 = 1e6;

/// Solves the fixed-mode QP of every one of the `n_M^N` sequences, in
/// lexicographic order, and returns the best. Ties keep the first sequence.
pub fn enumerate_exhaustive(ocp: &HybridOcp, x_p: &DVector<f64>) -> MiqpResult<MiqpSolution> {
    let start = Instant::now();
    let layout = Layout::of(ocp);
    let count = (layout.n_m as f64).powi(layout.horizon as i32);
    if count > MAX_ENUMERATED_SEQUENCES {
        return Err(MiqpError::TooManySequences { count });
    }
    let mut solver = QpSolver::new(QpSettings::default());
    let mut digits = vec![0usize; layout.horizon];
    let mut best: Option<(ModeSequence, DVector<f64>, f64)> = None;
    let mut qp_solves = 0;
    loop {
        let seq = ModeSequence::new(digits.clone());
        let sol = solver.solve(&assemble_fixed_mode_ocp(ocp, &seq, x_p)?)?;
        qp_solves += 1;
        if sol.status == QpStatus::Optimal && best.as_ref().is_none_or(|b| sol.objective < b.2) {
            best = Some((seq, sol.z, sol.objective));
        }
        // Odometer increment, last step fastest.
        let mut k = layout.horizon;
        loop {
            if k == 0 {
                let (modes, z, objective) = best.ok_or(MiqpError::InfeasibleProblem)?;
                let (x, u) = layout.trajectory(x_p, &z);
                return Ok(MiqpSolution {
                    modes,
                    u,
                    x,
                    objective,
                    gap: 0.0,
                    status: MiqpStatus::Optimal,
                    nodes_explored: 0,
                    qp_solves,
                    solve_time: start.elapsed().as_secs_f64(),
                    warm_started: false,
                    warm_start_feasible: false,
                    tree: None,
                });
            }
            k -= 1;
            digits[k] += 1;
            if digits[k] < layout.n_m {
                break;
            }
            digits[k] = 0;
        }
    }
}
