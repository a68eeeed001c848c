use std::io::{BufRead, Write};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::kdtree::{Best, KdTree};
use super::{distance_unchecked, LnmsError, LnmsResult};
use crate::miqp::ModeSequence;

/// Number of insertions kept in the linear overflow list before the tree is
/// rebuilt.
const REBUILD_EVERY: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: DVector<f64>,
    pub modes: ModeSequence,
    /// Fixed-mode objective when the sample was stored or last relabeled.
    pub objective: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleLine {
    x: Vec<f64>,
    modes: ModeSequence,
    objective: f64,
}

/// Result of a nearest-neighbor query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

/// Dataset of `(state, mode sequence)` pairs with exact nearest-neighbor
/// search under `sqrt(Σ w_i (a_i − b_i)²)`.
///
/// Queries take `&self` and may run concurrently; insertions need `&mut`.
/// Ties between equidistant samples go to the earliest inserted one.
#[derive(Debug, Clone)]
pub struct SampleStore {
    samples: Vec<Sample>,
    coords: Vec<f64>,
    weights: DVector<f64>,
    dedup: bool,
    tree: KdTree,
}

impl SampleStore {
    /// Empty store with the given positive weights. Exact duplicate states
    /// overwrite the stored label by default; see [`SampleStore::with_dedup`].
    pub fn new(weights: DVector<f64>) -> LnmsResult<Self> {
        if weights.is_empty() {
            return Err(LnmsError::InvalidWeights("weight vector is empty".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(LnmsError::InvalidWeights(format!("weights must be positive and finite, got {w}")));
        }
        Ok(Self {
            samples: Vec::new(),
            coords: Vec::new(),
            weights,
            dedup: true,
            tree: KdTree::default(),
        })
    }

    /// Unit weights in dimension `n_x`.
    pub fn euclidean(n_x: usize) -> LnmsResult<Self> {
        Self::new(DVector::from_element(n_x, 1.0))
    }

    /// When `false`, every insertion appends a new sample even if the same
    /// state is already stored.
    pub fn with_dedup(mut self, dedup: bool) -> Self {
        self.dedup = dedup;
        self
    }

    pub fn dedup(&self) -> bool {
        self.dedup
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn sample(&self, index: usize) -> Option<&Sample> {
        self.samples.get(index)
    }

    fn check_state(&self, x: &DVector<f64>) -> LnmsResult<()> {
        if x.len() != self.dim() {
            return Err(LnmsError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(LnmsError::NonFiniteState);
        }
        Ok(())
    }

    /// Stores `(x, modes)` and returns the index of the affected sample.
    pub fn insert(&mut self, x: DVector<f64>, modes: ModeSequence, objective: f64) -> LnmsResult<usize> {
        self.check_state(&x)?;
        if self.dedup {
            if let Some(n) = self.nearest(&x)? {
                if n.distance == 0.0 {
                    let s = &mut self.samples[n.index];
                    s.modes = modes;
                    s.objective = objective;
                    return Ok(n.index);
                }
            }
        }
        self.coords.extend(x.iter());
        self.samples.push(Sample { x, modes, objective });
        if self.samples.len() - self.tree.len() >= REBUILD_EVERY {
            self.rebuild();
        }
        Ok(self.samples.len() - 1)
    }

    /// Replaces the label of sample `index`.
    pub fn relabel(&mut self, index: usize, modes: ModeSequence, objective: f64) -> LnmsResult<()> {
        let s = self.samples.get_mut(index).ok_or(LnmsError::IndexOutOfRange(index))?;
        s.modes = modes;
        s.objective = objective;
        Ok(())
    }

    fn rebuild(&mut self) {
        self.tree = KdTree::build(&self.coords, self.dim(), self.samples.len(), self.weights.as_slice());
    }

    /// Exact nearest stored sample, `None` for an empty store.
    pub fn nearest(&self, x: &DVector<f64>) -> LnmsResult<Option<Neighbor>> {
        self.check_state(x)?;
        let (dim, w) = (self.dim(), self.weights.as_slice());
        let mut best = None;
        self.tree.nearest(&self.coords, dim, w, x.as_slice(), &mut best);
        for i in self.tree.len()..self.samples.len() {
            let d = distance_unchecked(x.as_slice(), &self.coords[i * dim..(i + 1) * dim], w);
            Best::offer(&mut best, i, d);
        }
        Ok(best.map(|b| Neighbor {
            index: b.index,
            distance: b.distance,
        }))
    }

    /// Brute-force counterpart of [`SampleStore::nearest`].
    pub fn nearest_linear(&self, x: &DVector<f64>) -> LnmsResult<Option<Neighbor>> {
        self.check_state(x)?;
        let mut best: Option<Neighbor> = None;
        for (i, s) in self.samples.iter().enumerate() {
            let d = distance_unchecked(x.as_slice(), s.x.as_slice(), self.weights.as_slice());
            if best.is_none_or(|b| d < b.distance) {
                best = Some(Neighbor { index: i, distance: d });
            }
        }
        Ok(best)
    }

    /// Mode sequence of the nearest sample and its distance.
    pub fn nn_query(&self, x: &DVector<f64>) -> LnmsResult<Option<(ModeSequence, f64)>> {
        Ok(self
            .nearest(x)?
            .map(|n| (self.samples[n.index].modes.clone(), n.distance)))
    }

    /// Writes one JSON object `{x, modes, objective}` per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> LnmsResult<()> {
        for s in &self.samples {
            let line = SampleLine {
                x: s.x.iter().copied().collect(),
                modes: s.modes.clone(),
                objective: s.objective,
            };
            serde_json::to_writer(&mut out, &line).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads samples written by [`SampleStore::write_jsonl`] into a store with
    /// the given weights. Blank lines are skipped.
    pub fn read_jsonl<R: BufRead>(input: R, weights: DVector<f64>, dedup: bool) -> LnmsResult<Self> {
        let mut store = Self::new(weights)?.with_dedup(dedup);
        for (k, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: SampleLine = serde_json::from_str(&line).map_err(|e| LnmsError::Parse {
                line: k + 1,
                message: e.to_string(),
            })?;
            store
                .insert(DVector::from_vec(rec.x), rec.modes, rec.objective)
                .map_err(|e| LnmsError::Parse {
                    line: k + 1,
                    message: e.to_string(),
                })?;
        }
        Ok(store)
    }
}
