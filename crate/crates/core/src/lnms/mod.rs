//! Nearest-neighbor mode-sequence learning.
//!
//! A [`SampleStore`] keeps `(state, mode sequence)` pairs and answers exact
//! nearest-neighbor queries under a weighted Euclidean metric. The
//! [`LnmsController`] predicts the mode sequence of a new state from its
//! nearest stored neighbor and solves only a QP when that prediction is
//! feasible; otherwise it falls back to branch-and-bound and stores the
//! result. [`improve_samples`] relabels stored samples offline with
//! warm-started branch-and-bound.

mod controller;
mod improve;
mod kdtree;
mod store;

use nalgebra::DVector;
use thiserror::Error;

use crate::miqp::MiqpError;

pub use controller::{ControlOutput, Controller, ExactMpc, LnmsController, LnmsStats, StepRecord};
pub use improve::{improve_samples, ImprovementEntry, ImprovementOutcome, ImprovementReport};
pub use store::{Neighbor, Sample, SampleStore};

#[derive(Debug, Error)]
pub enum LnmsError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("state is not finite")]
    NonFiniteState,
    #[error("sample index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("malformed store record on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Miqp(#[from] MiqpError),
}

pub type LnmsResult<T> = Result<T, LnmsError>;

/// `sqrt(Σ_i w_i (a_i − b_i)²)`.
pub fn weighted_distance(a: &DVector<f64>, b: &DVector<f64>, w: &DVector<f64>) -> LnmsResult<f64> {
    if a.len() != w.len() {
        return Err(LnmsError::DimensionMismatch {
            expected: w.len(),
            got: a.len(),
        });
    }
    if b.len() != w.len() {
        return Err(LnmsError::DimensionMismatch {
            expected: w.len(),
            got: b.len(),
        });
    }
    Ok(distance_unchecked(a.as_slice(), b.as_slice(), w.as_slice()))
}

pub(crate) fn distance_unchecked(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..w.len() {
        let d = a[i] - b[i];
        acc += w[i] * d * d;
    }
    acc.sqrt()
}
