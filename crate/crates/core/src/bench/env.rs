use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BenchError, BenchResult};
use crate::miqp::{BnbConfig, HybridOcp};
use crate::pwa::{
    build_cart_wall, build_elastic_pendulum, compute_invariant_set, lqr_gain, solve_dare, CartWallParams,
    PendulumParams, Polytope,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvId {
    Cart1,
    Cart2,
    Pendulum,
}

impl EnvId {
    pub const ALL: [EnvId; 3] = [EnvId::Cart1, EnvId::Cart2, EnvId::Pendulum];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::Cart1 => "cart1",
            EnvId::Cart2 => "cart2",
            EnvId::Pendulum => "pendulum",
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EnvId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| BenchError::UnknownEnvironment(s.to_string()))
    }
}

/// Axis-aligned box of initial states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Region {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> BenchResult<Self> {
        let region = Self { lo, hi };
        region.validate(None)?;
        Ok(region)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Checks finiteness, `lo ≤ hi` and, if given, the dimension.
    pub fn validate(&self, dim: Option<usize>) -> BenchResult<()> {
        if self.lo.len() != self.hi.len() || self.lo.is_empty() {
            return Err(BenchError::InvalidRegion(format!(
                "bounds have lengths {} and {}",
                self.lo.len(),
                self.hi.len()
            )));
        }
        if let Some(d) = dim.filter(|&d| d != self.lo.len()) {
            return Err(BenchError::InvalidRegion(format!(
                "region has dimension {} but the state has {d}",
                self.lo.len()
            )));
        }
        for (l, h) in self.lo.iter().zip(&self.hi) {
            if !(l.is_finite() && h.is_finite() && l <= h) {
                return Err(BenchError::InvalidRegion(format!("bad interval [{l}, {h}]")));
            }
        }
        Ok(())
    }

    /// Uniform draw from the box.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.lo.iter().zip(&self.hi).map(|(&l, &h)| if l == h { l } else { rng.random_range(l..h) }),
        )
    }
}

/// Recipe for an [`Environment`]; every `None` falls back to the default of
/// the chosen environment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSpec {
    pub horizon: Option<usize>,
    /// Diagonal of the state weight.
    pub q_diag: Option<Vec<f64>>,
    /// Diagonal of the input weight.
    pub r_diag: Option<Vec<f64>>,
    /// Terminal weight multiplier on the Riccati solution of mode 0.
    pub beta: Option<f64>,
    pub big_m: Option<f64>,
    pub cart: Option<CartWallParams>,
    pub pendulum: Option<PendulumParams>,
    /// Initial-state sampling region.
    pub region: Option<Region>,
    /// Metric weights of the sample store.
    pub weights: Option<Vec<f64>>,
    /// Attach the invariant terminal set (pendulum default: on).
    pub terminal_set: Option<bool>,
}

/// A benchmark system with its control problem and experiment defaults.
#[derive(Debug, Clone)]
pub struct Environment {
    pub id: EnvId,
    pub ocp: HybridOcp,
    pub region: Region,
    pub weights: DVector<f64>,
    /// Solver settings used by the online controller.
    pub bnb: BnbConfig,
}

impl Environment {
    /// Environment with all defaults.
    pub fn new(id: EnvId) -> BenchResult<Self> {
        Self::build(id, &EnvSpec::default())
    }

    pub fn build(id: EnvId, spec: &EnvSpec) -> BenchResult<Self> {
        let (system, horizon, q, r, region, bnb, terminal) = match id {
            EnvId::Cart1 => (
                build_cart_wall(spec.cart.as_ref().unwrap_or(&CartWallParams::default()))?,
                10,
                vec![1.0, 1.0],
                vec![1e-3],
                Region::new(vec![0.1, -10.0], vec![0.75, 10.0])?,
                BnbConfig::default(),
                false,
            ),
            EnvId::Cart2 => (
                build_cart_wall(spec.cart.as_ref().unwrap_or(&CartWallParams::two_walls()))?,
                25,
                vec![1.0, 1.0],
                vec![1e-3],
                Region::new(vec![-0.75, -20.0], vec![0.75, 20.0])?,
                BnbConfig {
                    time_limit: Some(5.0),
                    ..BnbConfig::default()
                },
                false,
            ),
            EnvId::Pendulum => (
                build_elastic_pendulum(spec.pendulum.as_ref().unwrap_or(&PendulumParams::default()))?,
                20,
                vec![1.0, 1.0],
                vec![1.0],
                Region::new(vec![-0.1, -0.5], vec![0.2, 0.5])?,
                BnbConfig {
                    time_limit: Some(5.0),
                    ..BnbConfig::default()
                },
                true,
            ),
        };
        let n_x = system.n_x();
        let q = DMatrix::from_diagonal(&DVector::from_vec(spec.q_diag.clone().unwrap_or(q)));
        let r = DMatrix::from_diagonal(&DVector::from_vec(spec.r_diag.clone().unwrap_or(r)));
        if q.nrows() != n_x || r.nrows() != system.n_u() {
            return Err(BenchError::InvalidConfig(format!(
                "weights must have lengths {} and {}",
                n_x,
                system.n_u()
            )));
        }
        let beta = spec.beta.unwrap_or(1000.0);
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(BenchError::InvalidConfig(format!("beta must be positive, got {beta}")));
        }
        let free = system.mode(0).clone();
        let riccati = solve_dare(&free.a, &free.b, &q, &r)?;
        let p_term = &riccati * beta;

        let terminal_set = if spec.terminal_set.unwrap_or(terminal) {
            // Maximal invariant set of the mode-0 LQR loop inside the state
            // box, the mode-0 guard and the input box.
            let k = lqr_gain(&free.a, &free.b, &r, &riccati)?;
            let a_cl = &free.a - &free.b * &k;
            let mut set = Polytope::from_box(system.x_min(), system.x_max());
            let n_u = system.n_u();
            let mut rows = DMatrix::zeros(free.num_guards() + 2 * n_u, n_x);
            let mut rhs = DVector::zeros(rows.nrows());
            // Guards H x + J u ≤ k with u = −K x.
            let guard_x = &free.guard_h - &free.guard_j * &k;
            for i in 0..free.num_guards() {
                rows.row_mut(i).copy_from(&guard_x.row(i));
                rhs[i] = free.guard_k[i];
            }
            for j in 0..n_u {
                let g = free.num_guards();
                rows.row_mut(g + 2 * j).copy_from(&(-k.row(j)));
                rhs[g + 2 * j] = system.u_max()[j];
                rows.row_mut(g + 2 * j + 1).copy_from(&k.row(j));
                rhs[g + 2 * j + 1] = -system.u_min()[j];
            }
            set = set.intersect(&Polytope::new(rows, rhs)?)?;
            Some(compute_invariant_set(&a_cl, &set, 200)?)
        } else {
            None
        };

        let system = Arc::new(system);
        let horizon = spec.horizon.unwrap_or(horizon);
        let mut ocp = HybridOcp::new(system, horizon, q, r, p_term)?;
        if let Some(set) = terminal_set {
            ocp = ocp.with_terminal_set(set)?;
        }
        if let Some(m) = spec.big_m {
            ocp = ocp.with_big_m(m)?;
        }
        let region = spec.region.clone().unwrap_or(region);
        region.validate(Some(n_x))?;
        let weights = DVector::from_vec(spec.weights.clone().unwrap_or_else(|| vec![1.0; n_x]));
        if weights.len() != n_x {
            return Err(BenchError::InvalidConfig(format!("metric weights must have length {n_x}")));
        }
        Ok(Self {
            id,
            ocp,
            region,
            weights,
            bnb,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_parse() {
        assert_eq!("cart2".parse::<EnvId>().unwrap(), EnvId::Cart2);
        assert!("cart3".parse::<EnvId>().is_err());
    }

    #[test]
    fn defaults_build() {
        for id in EnvId::ALL {
            let env = Environment::new(id).unwrap();
            assert_eq!(env.ocp.system.n_x(), 2);
            assert!(env.ocp.big_m.is_finite());
        }
        let pend = Environment::new(EnvId::Pendulum).unwrap();
        let set = pend.ocp.terminal_set.as_ref().unwrap();
        assert!(set.contains(&DVector::zeros(2), 0.0));
    }

    #[test]
    fn bad_region_is_rejected() {
        assert!(Region::new(vec![1.0, 0.0], vec![0.0, 1.0]).is_err());
        let spec = EnvSpec {
            region: Some(Region { lo: vec![0.0], hi: vec![1.0] }),
            ..Default::default()
        };
        assert!(matches!(Environment::build(EnvId::Cart1, &spec), Err(BenchError::InvalidRegion(_))));
    }
}
