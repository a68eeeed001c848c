//! Closed-loop experiments on the benchmark systems.
//!
//! Everything here is a deterministic function of its configuration and
//! seed, except for fields that carry wall-clock times. Solver time limits
//! make results timing-dependent when they are hit.

mod env;
mod experiments;
mod partition;
mod rollout;

use thiserror::Error;

use crate::lnms::LnmsError;
use crate::miqp::MiqpError;
use crate::pwa::PwaError;

pub use env::{EnvId, EnvSpec, Environment, Region};
pub use experiments::{
    run_mip_fraction_experiment, run_wallclock_comparison, sample_states, spearman, window_fractions,
    BenchReport, ExperimentOptions, ExperimentOutput, TimingTable, Trend,
};
pub use partition::{export_partition_grid, GridPoint, PartitionGrid};
pub use rollout::{closed_loop_rollout, RolloutRecord, RolloutStep, Termination};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("unknown environment {0:?} (expected cart1, cart2 or pendulum)")]
    UnknownEnvironment(String),
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("partition export needs a 2-dimensional state, got {0}")]
    UnsupportedDimension(usize),
    #[error("the sample store is empty")]
    EmptyStore,
    #[error(transparent)]
    Lnms(#[from] LnmsError),
    #[error(transparent)]
    Miqp(#[from] MiqpError),
    #[error(transparent)]
    Pwa(#[from] PwaError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type BenchResult<T> = Result<T, BenchError>;
