use log::debug;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::BenchResult;
use crate::lnms::{Controller, LnmsError};
use crate::miqp::MiqpError;
use crate::pwa::PwaSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxSteps,
    Infeasible,
    /// The solver hit its time or node limit before finding any solution.
    SolverLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutStep {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    /// Mode the simulator applied.
    pub mode: usize,
    pub mip_invoked: bool,
    pub solve_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub x0: Vec<f64>,
    pub steps: Vec<RolloutStep>,
    pub final_state: Vec<f64>,
    pub terminated: Termination,
}

impl RolloutRecord {
    pub fn mip_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.mip_invoked).count()
    }

    pub fn solve_time(&self) -> f64 {
        self.steps.iter().fold(0.0, |acc, s| acc + s.solve_time)
    }

    /// States `x_0 … x_T` including the final one.
    pub fn states(&self) -> Vec<DVector<f64>> {
        self.steps
            .iter()
            .map(|s| DVector::from_column_slice(&s.x))
            .chain(std::iter::once(DVector::from_column_slice(&self.final_state)))
            .collect()
    }

    /// Largest deviation between a recorded successor and a fresh simulation
    /// of the recorded state and input; `∞` if a step cannot be simulated.
    pub fn replay_error(&self, system: &PwaSystem) -> f64 {
        let states = self.states();
        let mut worst = 0.0_f64;
        for (t, s) in self.steps.iter().enumerate() {
            match system.simulate_step(&states[t], &DVector::from_column_slice(&s.u)) {
                Ok((next, mode)) if mode == s.mode => worst = worst.max((next - &states[t + 1]).amax()),
                _ => return f64::INFINITY,
            }
        }
        worst
    }

    /// Copy with every solve time set to zero.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        for s in &mut r.steps {
            s.solve_time = 0.0;
        }
        r
    }
}

/// Runs `controller` in closed loop from `x0` until `‖x‖₂ < convergence_eps`,
/// `max_steps` controls have been applied, or no control can be computed.
pub fn closed_loop_rollout<C: Controller + ?Sized>(
    controller: &mut C,
    x0: &DVector<f64>,
    max_steps: usize,
    convergence_eps: f64,
) -> BenchResult<RolloutRecord> {
    let system = controller.ocp().system.clone();
    let mut x = x0.clone();
    let mut steps = Vec::new();
    let terminated = loop {
        if x.norm() < convergence_eps {
            break Termination::Converged;
        }
        if steps.len() >= max_steps {
            break Termination::MaxSteps;
        }
        let out = match controller.control(&x) {
            Ok(out) => out,
            Err(LnmsError::Miqp(MiqpError::InfeasibleProblem)) => break Termination::Infeasible,
            Err(LnmsError::Miqp(MiqpError::NoSolutionWithinLimits { .. })) => break Termination::SolverLimit,
            Err(e) => return Err(e.into()),
        };
        let (next, mode) = match system.simulate_step(&x, &out.u0) {
            Ok(r) => r,
            Err(e) => {
                debug!("simulation left every guard: {e}");
                break Termination::Infeasible;
            }
        };
        steps.push(RolloutStep {
            x: x.iter().copied().collect(),
            u: out.u0.iter().copied().collect(),
            mode,
            mip_invoked: out.record.mip_invoked,
            solve_time: out.record.solve_time,
        });
        x = next;
    };
    Ok(RolloutRecord {
        x0: x0.iter().copied().collect(),
        steps,
        final_state: x.iter().copied().collect(),
        terminated,
    })
}
