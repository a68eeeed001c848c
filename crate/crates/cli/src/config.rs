use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use lnms_core::bench::{EnvId, EnvSpec, Environment, ExperimentOptions, Region};
use lnms_core::BnbConfig;

use crate::CliError;

/// Everything a command needs, read from one JSON document. Missing keys take
/// the defaults below and command-line flags override individual keys.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvId,
    /// Overrides of the environment's model and OCP parameters.
    pub env_params: EnvSpec,
    /// Solver settings of the online controller; `None` keeps the
    /// environment's own.
    pub solver: Option<BnbConfig>,
    pub dedup: bool,
    /// Store to start from (`run`) or to operate on (`improve`, `partition`).
    pub store: Option<PathBuf>,
    pub rollouts: usize,
    pub max_steps: usize,
    pub step_budget: Option<usize>,
    pub convergence_eps: f64,
    pub window: usize,
    /// Initial-state region; defaults to the environment's.
    pub region: Option<Region>,
    pub seed: u64,
    /// Seconds of branch-and-bound per sample during improvement.
    pub budget: f64,
    /// Instances solved by the wall-clock benchmark.
    pub n_ocps: usize,
    pub resolution: [usize; 2],
    /// Partition grid bounds; defaults to the sampling region.
    pub bounds: Option<Region>,
    /// Add the fixed-mode `u0` column to partition exports.
    pub with_u0: bool,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let experiment = ExperimentOptions::default();
        Self {
            env: EnvId::Cart1,
            env_params: EnvSpec::default(),
            solver: None,
            dedup: experiment.dedup,
            store: None,
            rollouts: 10,
            max_steps: experiment.max_steps,
            step_budget: experiment.step_budget,
            convergence_eps: experiment.convergence_eps,
            window: experiment.window,
            region: None,
            seed: 0,
            budget: 1.0,
            n_ocps: 100,
            resolution: [100, 100],
            bounds: None,
            with_u0: true,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        if !path.exists() {
            return Err(CliError::usage(format!("config not found: {}", path.display())));
        }
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: &str| Err(CliError::usage(msg.to_string()));
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        if self.window == 0 {
            return bad("window must be positive");
        }
        if !(self.convergence_eps.is_finite() && self.convergence_eps > 0.0) {
            return bad("convergence_eps must be positive");
        }
        if !(self.budget.is_finite() && self.budget >= 0.0) {
            return bad("budget must be a non-negative number of seconds");
        }
        if self.resolution.contains(&0) {
            return bad("resolution entries must be positive");
        }
        if let Some(s) = &self.solver {
            if !(s.gap_tol.is_finite() && s.gap_tol >= 0.0) || s.time_limit.is_some_and(|t| !(t >= 0.0)) {
                return bad("solver gap_tol and time_limit must be non-negative");
            }
        }
        Ok(())
    }

    pub fn environment(&self) -> Result<Environment, CliError> {
        let mut spec = self.env_params.clone();
        if self.region.is_some() {
            spec.region = self.region.clone();
        }
        Environment::build(self.env, &spec).map_err(|e| CliError::usage(format!("invalid environment: {e}")))
    }

    pub fn experiment_options(&self) -> ExperimentOptions {
        ExperimentOptions {
            max_steps: self.max_steps,
            convergence_eps: self.convergence_eps,
            window: self.window,
            step_budget: self.step_budget,
            bnb: self.solver,
            dedup: self.dedup,
        }
    }
}
