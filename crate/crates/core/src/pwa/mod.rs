//! Discrete-time piecewise-affine systems.
//!
//! A [`PwaSystem`] is a list of affine modes `x⁺ = A x + B u + c`, each active
//! on a guard polytope `H x + J u ≤ k` in the joint state-input space, plus
//! global state and input boxes.

mod envs;
mod invariant;
mod json;
mod riccati;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub use envs::{build_cart_wall, build_elastic_pendulum, CartWallParams, PendulumParams};
pub use invariant::{compute_invariant_set, compute_invariant_set_with, InvariantSetOptions};
pub use riccati::{dare_residual, lqr_gain, solve_dare, solve_dare_with, DARE_MAX_ITER, DARE_TOL};

/// Slack allowed when testing guard membership.
pub const GUARD_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PwaError {
    #[error("no mode guard holds at x = {x:?}, u = {u:?}")]
    NoActiveMode { x: Vec<f64>, u: Vec<f64> },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("Riccati iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("invariant set iteration stopped after {iterations} iterations without converging")]
    NotConverged { iterations: usize, partial: Polytope },
    #[error("malformed system document: {0}")]
    Document(String),
}

pub type PwaResult<T> = Result<T, PwaError>;

/// One affine mode and the region of `(x, u)` where it is active.
#[derive(Debug, Clone, PartialEq)]
pub struct PwaMode {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DVector<f64>,
    pub guard_h: DMatrix<f64>,
    pub guard_j: DMatrix<f64>,
    pub guard_k: DVector<f64>,
}

impl PwaMode {
    pub fn num_guards(&self) -> usize {
        self.guard_k.len()
    }

    /// Largest guard violation `max_r (H x + J u − k)_r`, or `-∞` without rows.
    pub fn guard_violation(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let lhs = &self.guard_h * x + &self.guard_j * u - &self.guard_k;
        lhs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn guard_holds(&self, x: &DVector<f64>, u: &DVector<f64>) -> bool {
        self.guard_violation(x, u) <= GUARD_TOL
    }

    /// `A x + B u + c`
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u + &self.c
    }

    fn check(&self, n_x: usize, n_u: usize) -> PwaResult<()> {
        let ng = self.guard_k.len();
        let shape = |name: &str, m: &DMatrix<f64>, r: usize, c: usize| {
            if m.nrows() == r && m.ncols() == c {
                Ok(())
            } else {
                Err(PwaError::DimensionMismatch(format!(
                    "{name} is {}x{}, expected {r}x{c}",
                    m.nrows(),
                    m.ncols()
                )))
            }
        };
        shape("A", &self.a, n_x, n_x)?;
        shape("B", &self.b, n_x, n_u)?;
        shape("guard_H", &self.guard_h, ng, n_x)?;
        shape("guard_J", &self.guard_j, ng, n_u)?;
        if self.c.len() != n_x {
            return Err(PwaError::DimensionMismatch(format!("c has length {}, expected {n_x}", self.c.len())));
        }
        let finite = self
            .a
            .iter()
            .chain(self.b.iter())
            .chain(self.c.iter())
            .chain(self.guard_h.iter())
            .chain(self.guard_j.iter())
            .chain(self.guard_k.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(PwaError::InvalidParameter("mode data must be finite".into()));
        }
        Ok(())
    }
}

/// A piecewise-affine system with bounded state and input.
#[derive(Debug, Clone, PartialEq)]
pub struct PwaSystem {
    modes: Vec<PwaMode>,
    n_x: usize,
    n_u: usize,
    x_min: DVector<f64>,
    x_max: DVector<f64>,
    u_min: DVector<f64>,
    u_max: DVector<f64>,
    dt: f64,
}

impl PwaSystem {
    pub fn new(
        modes: Vec<PwaMode>,
        x_bounds: (DVector<f64>, DVector<f64>),
        u_bounds: (DVector<f64>, DVector<f64>),
        dt: f64,
    ) -> PwaResult<Self> {
        let (x_min, x_max) = x_bounds;
        let (u_min, u_max) = u_bounds;
        if modes.is_empty() {
            return Err(PwaError::InvalidParameter("a system needs at least one mode".into()));
        }
        let n_x = x_min.len();
        let n_u = u_min.len();
        if x_max.len() != n_x || u_max.len() != n_u {
            return Err(PwaError::DimensionMismatch("bound vectors differ in length".into()));
        }
        if x_min.iter().zip(x_max.iter()).any(|(lo, hi)| !(lo < hi)) {
            return Err(PwaError::InvalidParameter("x_min must be below x_max".into()));
        }
        if u_min.iter().zip(u_max.iter()).any(|(lo, hi)| !(lo < hi)) {
            return Err(PwaError::InvalidParameter("u_min must be below u_max".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(PwaError::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        for mode in &modes {
            mode.check(n_x, n_u)?;
        }
        Ok(Self {
            modes,
            n_x,
            n_u,
            x_min,
            x_max,
            u_min,
            u_max,
            dt,
        })
    }

    pub fn modes(&self) -> &[PwaMode] {
        &self.modes
    }

    pub fn mode(&self, i: usize) -> &PwaMode {
        &self.modes[i]
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn x_min(&self) -> &DVector<f64> {
        &self.x_min
    }

    pub fn x_max(&self) -> &DVector<f64> {
        &self.x_max
    }

    pub fn u_min(&self) -> &DVector<f64> {
        &self.u_min
    }

    pub fn u_max(&self) -> &DVector<f64> {
        &self.u_max
    }

    /// Whether `x` lies in the state box up to `tol`.
    pub fn state_in_bounds(&self, x: &DVector<f64>, tol: f64) -> bool {
        x.len() == self.n_x
            && x.iter()
                .zip(self.x_min.iter().zip(self.x_max.iter()))
                .all(|(v, (lo, hi))| *v >= lo - tol && *v <= hi + tol)
    }

    /// Returns a copy with every bound replaced.
    pub fn with_bounds(
        &self,
        x_bounds: (DVector<f64>, DVector<f64>),
        u_bounds: (DVector<f64>, DVector<f64>),
    ) -> PwaResult<Self> {
        Self::new(self.modes.clone(), x_bounds, u_bounds, self.dt)
    }

    fn check_point(&self, x: &DVector<f64>, u: &DVector<f64>) -> PwaResult<()> {
        if x.len() != self.n_x || u.len() != self.n_u {
            return Err(PwaError::DimensionMismatch(format!(
                "expected x in R^{} and u in R^{}, got {} and {}",
                self.n_x,
                self.n_u,
                x.len(),
                u.len()
            )));
        }
        Ok(())
    }

    /// Lowest-index mode whose guard holds at `(x, u)`.
    pub fn active_mode(&self, x: &DVector<f64>, u: &DVector<f64>) -> PwaResult<usize> {
        self.check_point(x, u)?;
        self.modes
            .iter()
            .position(|m| m.guard_holds(x, u))
            .ok_or_else(|| PwaError::NoActiveMode {
                x: x.iter().copied().collect(),
                u: u.iter().copied().collect(),
            })
    }

    /// Applies the dynamics of the active mode.
    pub fn simulate_step(&self, x: &DVector<f64>, u: &DVector<f64>) -> PwaResult<(DVector<f64>, usize)> {
        let i = self.active_mode(x, u)?;
        Ok((self.modes[i].step(x, u), i))
    }
}

/// The set `{x : F x ≤ g}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    pub f: DMatrix<f64>,
    pub g: DVector<f64>,
}

impl Polytope {
    pub fn new(f: DMatrix<f64>, g: DVector<f64>) -> PwaResult<Self> {
        if f.nrows() != g.len() {
            return Err(PwaError::DimensionMismatch(format!(
                "F has {} rows but g has {} entries",
                f.nrows(),
                g.len()
            )));
        }
        if !f.iter().chain(g.iter()).all(|v| v.is_finite()) {
            return Err(PwaError::InvalidParameter("polytope data must be finite".into()));
        }
        Ok(Self { f, g })
    }

    /// The box `lo ≤ x ≤ hi`.
    pub fn from_box(lo: &DVector<f64>, hi: &DVector<f64>) -> Self {
        let n = lo.len();
        let mut f = DMatrix::zeros(2 * n, n);
        let mut g = DVector::zeros(2 * n);
        for i in 0..n {
            f[(2 * i, i)] = 1.0;
            g[2 * i] = hi[i];
            f[(2 * i + 1, i)] = -1.0;
            g[2 * i + 1] = -lo[i];
        }
        Self { f, g }
    }

    pub fn dim(&self) -> usize {
        self.f.ncols()
    }

    pub fn num_rows(&self) -> usize {
        self.g.len()
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        (&self.f * x - &self.g).iter().all(|&v| v <= tol)
    }

    /// Stacks the rows of `other` below those of `self`.
    pub fn intersect(&self, other: &Polytope) -> PwaResult<Polytope> {
        if self.dim() != other.dim() && self.num_rows() > 0 && other.num_rows() > 0 {
            return Err(PwaError::DimensionMismatch("polytopes live in different spaces".into()));
        }
        let n = self.dim().max(other.dim());
        let rows = self.num_rows() + other.num_rows();
        let mut f = DMatrix::zeros(rows, n);
        let mut g = DVector::zeros(rows);
        for (k, (src_f, src_g)) in [(&self.f, &self.g), (&other.f, &other.g)].into_iter().enumerate() {
            let off = if k == 0 { 0 } else { self.num_rows() };
            if src_g.is_empty() {
                continue;
            }
            f.view_mut((off, 0), (src_g.len(), n)).copy_from(src_f);
            g.rows_mut(off, src_g.len()).copy_from(src_g);
        }
        Ok(Polytope { f, g })
    }
}
