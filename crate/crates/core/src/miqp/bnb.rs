use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use log::{debug, warn};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::formulation::{Fixing, Relaxation};
use super::{BnbConfig, HybridOcp, MiqpError, MiqpResult, MiqpSolution, MiqpStatus, ModeSequence, INTEGRALITY_TOL};
use crate::qp::ocp::Layout;
use crate::qp::{assemble_fixed_mode_ocp, QpSettings, QpSolver, QpStatus};

/// One explored node of the search tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    /// Relaxation optimum, `None` when the node QP was infeasible or failed.
    pub relaxation: Option<f64>,
}

struct Node {
    fixing: Fixing,
    /// Lower bound inherited from the parent.
    bound: f64,
    depth: usize,
    seq: u64,
    parent: Option<usize>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap pops the maximum: smallest bound, then deepest, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

struct Incumbent {
    modes: ModeSequence,
    z: DVector<f64>,
    objective: f64,
}

struct Search<'a> {
    ocp: &'a HybridOcp,
    x_p: &'a DVector<f64>,
    solver: QpSolver,
    qp_solves: usize,
    incumbent: Option<Incumbent>,
}

impl Search<'_> {
    /// Solves the fixed-mode QP of `modes` and keeps it if it improves the incumbent.
    fn try_sequence(&mut self, modes: &ModeSequence) -> MiqpResult<bool> {
        let qp = assemble_fixed_mode_ocp(self.ocp, modes, self.x_p)?;
        let sol = self.solver.solve(&qp)?;
        self.qp_solves += 1;
        if sol.status != QpStatus::Optimal {
            return Ok(false);
        }
        if self.incumbent.as_ref().is_none_or(|inc| sol.objective < inc.objective) {
            self.incumbent = Some(Incumbent {
                modes: modes.clone(),
                z: sol.z,
                objective: sol.objective,
            });
        }
        Ok(true)
    }

    fn prune_level(&self, gap_tol: f64) -> f64 {
        match &self.incumbent {
            Some(inc) => inc.objective - gap_tol * inc.objective.abs().max(1.0),
            None => f64::INFINITY,
        }
    }
}

/// Sets the binary `(t, i)` and propagates `Σ_i μ_{t,i} = 1`. Returns `false`
/// when step `t` is left without any admissible mode.
fn fix(fixing: &mut Fixing, n_m: usize, t: usize, i: usize, value: bool) -> bool {
    let step = &mut fixing[t * n_m..(t + 1) * n_m];
    if value {
        for (k, f) in step.iter_mut().enumerate() {
            *f = Some(k == i);
        }
        return true;
    }
    step[i] = Some(false);
    let free: Vec<usize> = (0..n_m).filter(|&k| step[k].is_none()).collect();
    let ones = step.iter().filter(|f| **f == Some(true)).count();
    match (free.len(), ones) {
        (0, 0) => false,
        (1, 0) => {
            step[free[0]] = Some(true);
            true
        }
        _ => true,
    }
}

/// Best-first branch-and-bound on the big-M formulation.
///
/// A feasible `warm_start` seeds the incumbent; with
/// `config.stop_at_first_feasible` it is returned right away without exploring
/// any node. Node bounds come from the QP relaxation with the fixed binaries
/// substituted; the branching variable is the most fractional binary of the
/// earliest step that has one.
pub fn solve_bnb(
    ocp: &HybridOcp,
    x_p: &DVector<f64>,
    warm_start: Option<&ModeSequence>,
    config: &BnbConfig,
) -> MiqpResult<MiqpSolution> {
    let start = Instant::now();
    let layout = Layout::of(ocp);
    if x_p.len() != layout.n_x {
        return Err(MiqpError::InvalidProblem(format!(
            "initial state has length {}, expected {}",
            x_p.len(),
            layout.n_x
        )));
    }
    if x_p.iter().any(|v| !v.is_finite()) {
        return Err(MiqpError::InvalidProblem("initial state is not finite".into()));
    }
    if !ocp.system.state_in_bounds(x_p, 0.0) {
        return Err(MiqpError::InfeasibleProblem);
    }

    let mut search = Search {
        ocp,
        x_p,
        solver: QpSolver::new(QpSettings::default()),
        qp_solves: 0,
        incumbent: None,
    };
    let mut warm_start_feasible = false;
    if let Some(ws) = warm_start {
        ws.validate(layout.horizon, layout.n_m)?;
        warm_start_feasible = search.try_sequence(ws)?;
    }

    let mut tree = config.record_tree.then(Vec::new);
    let mut nodes_explored = 0usize;
    let finish = |search: Search, status: MiqpStatus, best_bound: f64, nodes: usize, tree: Option<Vec<NodeRecord>>| {
        let inc = search.incumbent.expect("finish requires an incumbent");
        let (x, u) = layout.trajectory(x_p, &inc.z);
        let gap = ((inc.objective - best_bound) / inc.objective.abs().max(1.0)).max(0.0);
        MiqpSolution {
            modes: inc.modes,
            u,
            x,
            objective: inc.objective,
            gap,
            status,
            nodes_explored: nodes,
            qp_solves: search.qp_solves,
            solve_time: start.elapsed().as_secs_f64(),
            warm_started: warm_start.is_some(),
            warm_start_feasible,
            tree,
        }
    };

    if config.stop_at_first_feasible && search.incumbent.is_some() {
        return Ok(finish(search, MiqpStatus::FeasibleEarlyStop, f64::NEG_INFINITY, 0, tree));
    }

    let relaxation = Relaxation::new(ocp, x_p)?;
    // Depth-first until the search reaches a node it does not expand while an
    // incumbent exists, best-first afterwards. Without a warm start this dives
    // to the first incumbent; with one it is a single plunge that may find a
    // better sequence early.
    let mut heap = BinaryHeap::new();
    let mut dive: Vec<Node> = Vec::new();
    let mut diving = true;
    let mut expanded_last = true;
    let mut seq = 0u64;
    heap.push(Node {
        fixing: vec![None; layout.horizon * layout.n_m],
        bound: f64::NEG_INFINITY,
        depth: 0,
        seq,
        parent: None,
    });

    loop {
        let limit = if config.time_limit.is_some_and(|tl| start.elapsed().as_secs_f64() >= tl) {
            Some(MiqpStatus::TimeLimit)
        } else if config.node_limit.is_some_and(|nl| nodes_explored >= nl) {
            Some(MiqpStatus::NodeLimit)
        } else {
            None
        };
        if let Some(status) = limit {
            let bound = heap
                .peek()
                .map(|n| n.bound)
                .into_iter()
                .chain(dive.iter().map(|n| n.bound))
                .fold(f64::INFINITY, f64::min);
            return match search.incumbent {
                Some(_) => Ok(finish(search, status, bound, nodes_explored, tree)),
                None => Err(MiqpError::NoSolutionWithinLimits {
                    nodes_explored,
                    solve_time: start.elapsed().as_secs_f64(),
                }),
            };
        }

        if diving && !expanded_last && search.incumbent.is_some() {
            diving = false;
            heap.extend(dive.drain(..));
        }
        expanded_last = false;
        let from_dive = !dive.is_empty();
        let Some(node) = dive.pop().or_else(|| heap.pop()) else { break };
        if from_dive && node.bound >= search.prune_level(config.gap_tol) {
            continue;
        }
        if node.bound >= search.prune_level(config.gap_tol) {
            // Every remaining node has at least this bound.
            let bound = node.bound;
            return Ok(finish(search, MiqpStatus::Optimal, bound, nodes_explored, tree));
        }

        let id = nodes_explored;
        nodes_explored += 1;
        let problem = relaxation.node(&node.fixing);
        let sol = search.solver.solve(&problem.qp)?;
        search.qp_solves += 1;
        if let Some(tree) = tree.as_mut() {
            tree.push(NodeRecord {
                id,
                parent: node.parent,
                depth: node.depth,
                relaxation: (sol.status == QpStatus::Optimal).then_some(sol.objective),
            });
        }

        let bound = match sol.status {
            QpStatus::Infeasible => continue,
            QpStatus::Optimal => sol.objective.max(node.bound),
            QpStatus::MaxIter => {
                warn!("node relaxation hit the iteration limit; branching without a new bound");
                node.bound
            }
        };
        if bound >= search.prune_level(config.gap_tol) {
            continue;
        }

        let n_m = layout.n_m;
        let mu = |k: usize| -> f64 { problem.free.get(k).map_or(0.0, |&(_, _, c)| sol.z[c].clamp(0.0, 1.0)) };
        let integral = sol.status == QpStatus::Optimal
            && (0..problem.free.len()).all(|k| mu(k).min(1.0 - mu(k)) <= INTEGRALITY_TOL);

        if integral {
            let mut modes = vec![usize::MAX; layout.horizon];
            for t in 0..layout.horizon {
                for i in 0..n_m {
                    if node.fixing[t * n_m + i] == Some(true) {
                        modes[t] = i;
                    }
                }
            }
            for (k, &(t, i, _)) in problem.free.iter().enumerate() {
                if mu(k) > 0.5 {
                    modes[t] = i;
                }
            }
            if modes.iter().all(|&m| m < n_m) {
                let modes = ModeSequence::new(modes);
                let accepted = if problem.free.is_empty() {
                    let better = search.incumbent.as_ref().is_none_or(|inc| sol.objective < inc.objective);
                    if better {
                        search.incumbent = Some(Incumbent {
                            modes,
                            z: sol.z.rows(0, layout.continuous()).into_owned(),
                            objective: sol.objective,
                        });
                    }
                    true
                } else {
                    search.try_sequence(&modes)?
                };
                if accepted {
                    debug!("incumbent {:.6} after {} nodes", search.incumbent.as_ref().unwrap().objective, nodes_explored);
                    if config.stop_at_first_feasible {
                        return Ok(finish(search, MiqpStatus::FeasibleEarlyStop, bound, nodes_explored, tree));
                    }
                    continue;
                }
            }
        }
        if problem.free.is_empty() {
            continue;
        }

        // Most fractional binary of the earliest step that has a free one.
        let first_t = problem.free.iter().map(|f| f.0).min().unwrap();
        let frac_t = problem
            .free
            .iter()
            .enumerate()
            .filter(|(k, _)| mu(*k).min(1.0 - mu(*k)) > INTEGRALITY_TOL)
            .map(|(_, f)| f.0)
            .min()
            .unwrap_or(first_t);
        let (branch_t, branch_i) = problem
            .free
            .iter()
            .enumerate()
            .filter(|(_, f)| f.0 == frac_t)
            .max_by(|(a, _), (b, _)| {
                let fa = mu(*a).min(1.0 - mu(*a));
                let fb = mu(*b).min(1.0 - mu(*b));
                fa.total_cmp(&fb).then(b.cmp(a))
            })
            .map(|(_, f)| (f.0, f.1))
            .unwrap();

        let branch_k = problem.free.iter().position(|f| (f.0, f.1) == (branch_t, branch_i)).unwrap();
        // While diving, the child closer to the relaxation is explored first.
        let order = if mu(branch_k) >= 0.5 { [false, true] } else { [true, false] };
        for value in order {
            let mut fixing = node.fixing.clone();
            if fix(&mut fixing, n_m, branch_t, branch_i, value) {
                seq += 1;
                let child = Node {
                    fixing,
                    bound,
                    depth: node.depth + 1,
                    seq,
                    parent: Some(id),
                };
                expanded_last = true;
                if diving {
                    dive.push(child);
                } else {
                    heap.push(child);
                }
            }
        }
    }

    match search.incumbent.as_ref().map(|inc| inc.objective) {
        Some(bound) => Ok(finish(search, MiqpStatus::Optimal, bound, nodes_explored, tree)),
        None => Err(MiqpError::InfeasibleProblem),
    }
}
