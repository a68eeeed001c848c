//! Big-M relaxation of the hybrid OCP and its restriction to B&B nodes.

use nalgebra::{DMatrix, DVector};

use super::{HybridOcp, MiqpResult};
use crate::qp::ocp::{affine_terms, box_and_terminal_rows, cost, Layout, RowBuilder};
use crate::qp::DenseQp;

type SparseRow = Vec<(usize, f64)>;

/// Per-(step, mode) constraint blocks over the continuous variables only.
struct ModeBlock {
    /// `row · z = rhs` when the mode is active.
    dynamics: Vec<(SparseRow, f64)>,
    /// `row · z ≤ rhs` when the mode is active.
    guards: Vec<(SparseRow, f64)>,
}

/// Reusable template for the node problems of one B&B run.
pub(crate) struct Relaxation {
    pub layout: Layout,
    big_m: f64,
    h: DMatrix<f64>,
    constant: f64,
    base: Vec<(SparseRow, f64)>,
    blocks: Vec<Vec<ModeBlock>>,
}

/// A node QP together with the column of every free binary.
pub(crate) struct NodeProblem {
    pub qp: DenseQp,
    /// `(step, mode, column)` of each binary left free.
    pub free: Vec<(usize, usize, usize)>,
}

/// Fixing state of the binaries, indexed by `t * n_m + i`.
pub(crate) type Fixing = Vec<Option<bool>>;

impl Relaxation {
    pub fn new(ocp: &HybridOcp, x_p: &DVector<f64>) -> MiqpResult<Self> {
        let layout = Layout::of(ocp);
        let n = layout.continuous();
        let (h, _, constant) = cost(ocp, &layout, n, x_p);
        let mut base = RowBuilder::new(n);
        box_and_terminal_rows(ocp, &layout, x_p, &mut base);
        let base = base.rows.into_iter().zip(base.rhs).collect();

        let sys = &ocp.system;
        let mut blocks = Vec::with_capacity(layout.horizon);
        for t in 0..layout.horizon {
            let mut per_mode = Vec::with_capacity(layout.n_m);
            for mode in sys.modes() {
                let mut dynamics = Vec::with_capacity(layout.n_x);
                for r in 0..layout.n_x {
                    let a_row: Vec<f64> = mode.a.row(r).iter().copied().collect();
                    let b_row: Vec<f64> = mode.b.row(r).iter().copied().collect();
                    let (mut row, c0) = affine_terms(&layout, t, &a_row, &b_row, -1.0, x_p);
                    row.push((layout.x(t + 1) + r, 1.0));
                    dynamics.push((row, mode.c[r] - c0));
                }
                let mut guards = Vec::with_capacity(mode.num_guards());
                for r in 0..mode.num_guards() {
                    let h_row: Vec<f64> = mode.guard_h.row(r).iter().copied().collect();
                    let j_row: Vec<f64> = mode.guard_j.row(r).iter().copied().collect();
                    let (row, c0) = affine_terms(&layout, t, &h_row, &j_row, 1.0, x_p);
                    guards.push((row, mode.guard_k[r] - ocp.guard_margin_at(t) - c0));
                }
                per_mode.push(ModeBlock { dynamics, guards });
            }
            blocks.push(per_mode);
        }
        Ok(Self {
            layout,
            big_m: ocp.big_m,
            h,
            constant,
            base,
            blocks,
        })
    }

    /// Problem at a node. Binaries fixed to 0 drop their mode's rows, those
    /// fixed to 1 turn them into hard constraints, free ones keep the big-M
    /// form with `0 ≤ μ ≤ 1`.
    pub fn node(&self, fixing: &[Option<bool>]) -> NodeProblem {
        let l = &self.layout;
        let nc = l.continuous();
        let mut free = Vec::new();
        for t in 0..l.horizon {
            for i in 0..l.n_m {
                if fixing[t * l.n_m + i].is_none() {
                    free.push((t, i, nc + free.len()));
                }
            }
        }
        let n = nc + free.len();
        let col_of = |t: usize, i: usize| free.iter().find(|&&(ft, fi, _)| ft == t && fi == i).map(|f| f.2);

        let mut eq = RowBuilder::new(n);
        let mut ineq = RowBuilder::new(n);
        for (row, rhs) in &self.base {
            ineq.push(row.clone(), *rhs);
        }
        let m = self.big_m;
        for t in 0..l.horizon {
            let mut sum_row = Vec::new();
            let mut fixed_ones = 0.0;
            for i in 0..l.n_m {
                let block = &self.blocks[t][i];
                match fixing[t * l.n_m + i] {
                    Some(false) => {}
                    Some(true) => {
                        fixed_ones += 1.0;
                        for (row, rhs) in &block.dynamics {
                            eq.push(row.clone(), *rhs);
                        }
                        for (row, rhs) in &block.guards {
                            ineq.push(row.clone(), *rhs);
                        }
                    }
                    None => {
                        let c = col_of(t, i).expect("free binary has a column");
                        sum_row.push((c, 1.0));
                        for (row, rhs) in &block.dynamics {
                            let mut up = row.clone();
                            up.push((c, m));
                            ineq.push(up, rhs + m);
                            let mut down: SparseRow = row.iter().map(|&(j, v)| (j, -v)).collect();
                            down.push((c, m));
                            ineq.push(down, m - rhs);
                        }
                        for (row, rhs) in &block.guards {
                            let mut g = row.clone();
                            g.push((c, m));
                            ineq.push(g, rhs + m);
                        }
                        ineq.push(vec![(c, 1.0)], 1.0);
                        ineq.push(vec![(c, -1.0)], 0.0);
                    }
                }
            }
            if !sum_row.is_empty() {
                eq.push(sum_row, 1.0 - fixed_ones);
            }
        }

        let mut h = DMatrix::zeros(n, n);
        h.view_mut((0, 0), (nc, nc)).copy_from(&self.h);
        let (a_eq, b_eq) = eq.into_dense();
        let (a_in, b_in) = ineq.into_dense();
        NodeProblem {
            qp: DenseQp {
                h,
                g: DVector::zeros(n),
                a_eq,
                b_eq,
                a_in,
                b_in,
                constant: self.constant,
            },
            free,
        }
    }
}
