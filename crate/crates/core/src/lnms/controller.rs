use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{LnmsError, LnmsResult, SampleStore};
use crate::miqp::{solve_bnb, BnbConfig, HybridOcp, ModeSequence};
use crate::qp::ocp::Layout;
use crate::qp::{assemble_fixed_mode_ocp, QpSettings, QpSolver, QpStatus};

/// What happened during one control step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Branch-and-bound was run.
    pub mip_invoked: bool,
    /// The predicted (or warm-start) sequence was feasible at the state.
    pub warm_start_feasible: bool,
    /// Seconds spent in solver calls.
    pub solve_time: f64,
    pub objective: f64,
    /// Branch-and-bound nodes explored (0 for QP-only steps).
    pub nodes: usize,
}

/// Control applied at a state, together with the plan it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub u0: DVector<f64>,
    pub modes: ModeSequence,
    /// Planned states `x_0 … x_N`.
    pub plan_x: Vec<DVector<f64>>,
    /// Planned inputs `u_0 … u_{N−1}`.
    pub plan_u: Vec<DVector<f64>>,
    pub record: StepRecord,
}

/// Anything that maps a state to a control by solving the hybrid OCP.
pub trait Controller {
    fn control(&mut self, x_p: &DVector<f64>) -> LnmsResult<ControlOutput>;
    fn ocp(&self) -> &HybridOcp;
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LnmsStats {
    pub steps: usize,
    pub mip_invocations: usize,
    pub qp_only_steps: usize,
    pub records: Vec<StepRecord>,
}

impl LnmsStats {
    fn push(&mut self, record: StepRecord) {
        self.steps += 1;
        if record.mip_invoked {
            self.mip_invocations += 1;
        } else {
            self.qp_only_steps += 1;
        }
        self.records.push(record);
    }
}

/// Online controller that reuses the mode sequence of the nearest stored
/// state and falls back to branch-and-bound when that sequence is infeasible.
pub struct LnmsController {
    ocp: HybridOcp,
    store: SampleStore,
    config: BnbConfig,
    solver: QpSolver,
    stats: LnmsStats,
}

impl LnmsController {
    pub fn new(ocp: HybridOcp, store: SampleStore, config: BnbConfig) -> LnmsResult<Self> {
        if store.dim() != ocp.system.n_x() {
            return Err(LnmsError::DimensionMismatch {
                expected: ocp.system.n_x(),
                got: store.dim(),
            });
        }
        Ok(Self {
            ocp,
            store,
            config,
            solver: QpSolver::new(QpSettings::default()),
            stats: LnmsStats::default(),
        })
    }

    pub fn store(&self) -> &SampleStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut SampleStore {
        &mut self.store
    }

    pub fn into_store(self) -> SampleStore {
        self.store
    }

    pub fn stats(&self) -> &LnmsStats {
        &self.stats
    }

    pub fn config(&self) -> &BnbConfig {
        &self.config
    }

    pub fn set_config(&mut self, config: BnbConfig) {
        self.config = config;
    }

    /// One pass of the online loop at state `x_p`.
    ///
    /// The nearest neighbor's sequence is tried first as a plain QP. Only if
    /// the store is empty or that QP is not solved to optimality does
    /// branch-and-bound run, warm-started with the prediction. The state and
    /// the sequence actually used are then stored.
    pub fn control_step(&mut self, x_p: &DVector<f64>) -> LnmsResult<ControlOutput> {
        if x_p.len() != self.ocp.system.n_x() {
            return Err(LnmsError::DimensionMismatch {
                expected: self.ocp.system.n_x(),
                got: x_p.len(),
            });
        }
        if x_p.iter().any(|v| !v.is_finite()) {
            return Err(LnmsError::NonFiniteState);
        }
        let layout = Layout::of(&self.ocp);
        let predicted = self.store.nn_query(x_p)?.map(|(modes, _)| modes);

        let mut solve_time = 0.0;
        if let Some(modes) = &predicted {
            let qp = assemble_fixed_mode_ocp(&self.ocp, modes, x_p)?;
            let started = Instant::now();
            let sol = self.solver.solve(&qp).map_err(crate::miqp::MiqpError::from)?;
            solve_time += started.elapsed().as_secs_f64();
            if sol.status == QpStatus::Optimal {
                let (plan_x, plan_u) = layout.trajectory(x_p, &sol.z);
                let record = StepRecord {
                    mip_invoked: false,
                    warm_start_feasible: true,
                    solve_time,
                    objective: sol.objective,
                    nodes: 0,
                };
                self.store.insert(x_p.clone(), modes.clone(), sol.objective)?;
                self.stats.push(record);
                return Ok(ControlOutput {
                    u0: plan_u[0].clone(),
                    modes: modes.clone(),
                    plan_x,
                    plan_u,
                    record,
                });
            }
        }

        let started = Instant::now();
        let sol = solve_bnb(&self.ocp, x_p, predicted.as_ref(), &self.config)?;
        solve_time += started.elapsed().as_secs_f64();
        let record = StepRecord {
            mip_invoked: true,
            warm_start_feasible: sol.warm_start_feasible,
            solve_time,
            objective: sol.objective,
            nodes: sol.nodes_explored,
        };
        self.store.insert(x_p.clone(), sol.modes.clone(), sol.objective)?;
        self.stats.push(record);
        Ok(ControlOutput {
            u0: sol.u[0].clone(),
            modes: sol.modes,
            plan_x: sol.x,
            plan_u: sol.u,
            record,
        })
    }
}

impl Controller for LnmsController {
    fn control(&mut self, x_p: &DVector<f64>) -> LnmsResult<ControlOutput> {
        self.control_step(x_p)
    }

    fn ocp(&self) -> &HybridOcp {
        &self.ocp
    }
}

/// Hybrid MPC that runs branch-and-bound from scratch at every step.
pub struct ExactMpc {
    ocp: HybridOcp,
    config: BnbConfig,
}

impl ExactMpc {
    pub fn new(ocp: HybridOcp, config: BnbConfig) -> Self {
        Self { ocp, config }
    }
}

impl Controller for ExactMpc {
    fn control(&mut self, x_p: &DVector<f64>) -> LnmsResult<ControlOutput> {
        let started = Instant::now();
        let sol = solve_bnb(&self.ocp, x_p, None, &self.config)?;
        let record = StepRecord {
            mip_invoked: true,
            warm_start_feasible: false,
            solve_time: started.elapsed().as_secs_f64(),
            objective: sol.objective,
            nodes: sol.nodes_explored,
        };
        Ok(ControlOutput {
            u0: sol.u[0].clone(),
            modes: sol.modes,
            plan_x: sol.x,
            plan_u: sol.u,
            record,
        })
    }

    fn ocp(&self) -> &HybridOcp {
        &self.ocp
    }
}
