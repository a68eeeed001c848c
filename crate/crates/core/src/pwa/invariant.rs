//! Maximal positively invariant sets of linear closed loops.

use nalgebra::{DMatrix, DVector};

use super::{Polytope, PwaError, PwaResult};
use crate::qp::{solve_qp, DenseQp, QpSettings, QpStatus};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantSetOptions {
    pub max_iter: usize,
    /// Upper bound on the number of rows of the returned polytope.
    pub max_rows: usize,
    /// A row is redundant when its maximum over the other rows is at most
    /// `g_i + redundancy_tol`.
    pub redundancy_tol: f64,
}

impl Default for InvariantSetOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            max_rows: 512,
            redundancy_tol: 1e-9,
        }
    }
}

/// Largest value of `c·x` over `set`, `None` if unbounded or unsolved, and
/// `-∞` if the set is empty.
fn support(set: &Polytope, c: &DVector<f64>) -> Option<f64> {
    if set.num_rows() == 0 {
        return None;
    }
    let lp = DenseQp::linear(-c.clone(), set.f.clone(), set.g.clone());
    let sol = solve_qp(&lp, &QpSettings::default()).ok()?;
    match sol.status {
        QpStatus::Optimal => Some(-sol.objective),
        QpStatus::Infeasible => Some(f64::NEG_INFINITY),
        QpStatus::MaxIter => None,
    }
}

fn push_row(set: &mut Polytope, row: &DVector<f64>, rhs: f64) {
    let n = set.dim().max(row.len());
    let m = set.num_rows();
    let mut f = DMatrix::zeros(m + 1, n);
    if m > 0 {
        f.view_mut((0, 0), (m, n)).copy_from(&set.f);
    }
    f.row_mut(m).copy_from(&row.transpose());
    set.f = f;
    set.g = set.g.push(rhs);
}

/// Computes `{x : F A_clᵏ x ≤ g, k = 0, 1, …}` by adding the rows of each
/// power until one full power contributes only redundant rows.
pub fn compute_invariant_set(a_cl: &DMatrix<f64>, constraints: &Polytope, max_iter: usize) -> PwaResult<Polytope> {
    compute_invariant_set_with(
        a_cl,
        constraints,
        &InvariantSetOptions {
            max_iter,
            ..Default::default()
        },
    )
}

pub fn compute_invariant_set_with(
    a_cl: &DMatrix<f64>,
    constraints: &Polytope,
    opts: &InvariantSetOptions,
) -> PwaResult<Polytope> {
    let n = a_cl.nrows();
    if a_cl.ncols() != n || (constraints.num_rows() > 0 && constraints.dim() != n) {
        return Err(PwaError::DimensionMismatch(format!(
            "closed loop is {:?} but constraints live in R^{}",
            a_cl.shape(),
            constraints.dim()
        )));
    }
    let mut set = constraints.clone();
    let mut power = DMatrix::<f64>::identity(n, n);
    for iteration in 1..=opts.max_iter {
        power = a_cl * power;
        let candidates = &constraints.f * &power;
        let mut added = 0;
        for i in 0..candidates.nrows() {
            let row = candidates.row(i).transpose();
            let rhs = constraints.g[i];
            let redundant = match support(&set, &row) {
                Some(max) => max <= rhs + opts.redundancy_tol,
                None => row.amax() == 0.0 && rhs >= 0.0,
            };
            if !redundant {
                push_row(&mut set, &row, rhs);
                added += 1;
                if set.num_rows() > opts.max_rows {
                    return Err(PwaError::NotConverged {
                        iterations: iteration,
                        partial: set,
                    });
                }
            }
        }
        if added == 0 {
            return Ok(set);
        }
    }
    Err(PwaError::NotConverged {
        iterations: opts.max_iter,
        partial: set,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_box(n: usize) -> Polytope {
        Polytope::from_box(&DVector::from_element(n, -1.0), &DVector::from_element(n, 1.0))
    }

    #[test]
    fn zero_closed_loop_keeps_constraints() {
        let c = unit_box(2);
        let s = compute_invariant_set(&DMatrix::zeros(2, 2), &c, 50).unwrap();
        assert_eq!(s, c);
    }

    #[test]
    fn contraction_keeps_box() {
        let c = unit_box(2);
        let s = compute_invariant_set(&(DMatrix::identity(2, 2) * 0.5), &c, 50).unwrap();
        assert_eq!(s, c);
    }

    #[test]
    fn rotation_with_shrink_is_invariant_on_samples() {
        let th: f64 = 0.5;
        let a = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]) * 0.95;
        let c = unit_box(2);
        let s = compute_invariant_set(&a, &c, 100).unwrap();
        assert!(s.num_rows() > 4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut inside = 0;
        for _ in 0..10_000 {
            let x = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            if s.contains(&x, 0.0) {
                inside += 1;
                assert!(s.contains(&(&a * &x), 1e-9));
            }
        }
        assert!(inside > 100);
    }

    #[test]
    fn unstable_loop_hits_the_iteration_cap() {
        let a = DMatrix::from_row_slice(2, 2, &[1.2, 0.3, 0.0, 1.1]);
        let err = compute_invariant_set(&a, &unit_box(2), 3).unwrap_err();
        assert!(matches!(err, PwaError::NotConverged { iterations: 3, .. }));
    }
}
