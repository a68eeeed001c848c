use nalgebra::DVector;

use super::{HybridOcp, MiqpSolution};

/// Worst violations of a hybrid solution, measured directly on the system
/// data with untightened guards.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolutionResiduals {
    /// `max |x_{t+1} − A x_t − B u_t − c|` for the planned modes.
    pub dynamics: f64,
    /// Largest positive part of `H x_t + J u_t − k`.
    pub guards: f64,
    /// Largest excursion outside the state and input boxes.
    pub bounds: f64,
    /// Largest terminal-set violation.
    pub terminal: f64,
    /// `max |x_0 − x_p|`.
    pub initial: f64,
    /// `|reported objective − recomputed trajectory cost|`.
    pub objective: f64,
}

impl SolutionResiduals {
    /// Largest constraint residual (the objective mismatch is excluded).
    pub fn max(&self) -> f64 {
        self.dynamics.max(self.guards).max(self.bounds).max(self.terminal).max(self.initial)
    }

    pub fn is_sound(&self, tol: f64) -> bool {
        self.max() <= tol
    }
}

/// Recomputes every constraint of `sol` from scratch.
pub fn check_solution(ocp: &HybridOcp, x_p: &DVector<f64>, sol: &MiqpSolution) -> SolutionResiduals {
    let sys = &ocp.system;
    let n = ocp.horizon;
    let mut res = SolutionResiduals::default();
    if sol.x.len() != n + 1 || sol.u.len() != n || sol.modes.len() != n {
        return SolutionResiduals {
            dynamics: f64::INFINITY,
            ..res
        };
    }
    res.initial = (&sol.x[0] - x_p).amax();

    let outside = |v: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>| {
        v.iter()
            .zip(lo.iter().zip(hi.iter()))
            .map(|(&x, (&l, &h))| (l - x).max(x - h).max(0.0))
            .fold(0.0, f64::max)
    };
    for t in 0..n {
        let Some(mode) = sys.modes().get(sol.modes.0[t]) else {
            res.dynamics = f64::INFINITY;
            return res;
        };
        let (x, u) = (&sol.x[t], &sol.u[t]);
        let predicted = &mode.a * x + &mode.b * u + &mode.c;
        res.dynamics = res.dynamics.max((&sol.x[t + 1] - predicted).amax());
        res.guards = res.guards.max(mode.guard_violation(x, u).max(0.0));
        res.bounds = res.bounds.max(outside(u, sys.u_min(), sys.u_max()));
    }
    for x in &sol.x {
        res.bounds = res.bounds.max(outside(x, sys.x_min(), sys.x_max()));
    }
    if let Some(set) = &ocp.terminal_set {
        if set.num_rows() > 0 {
            let excess = &set.f * &sol.x[n] - &set.g;
            res.terminal = excess.max().max(0.0);
        }
    }
    res.objective = (sol.objective - ocp.trajectory_cost(&sol.x, &sol.u)).abs();
    res
}
