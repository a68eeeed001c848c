//! Discrete algebraic Riccati equation and LQR gain.

use nalgebra::DMatrix;

use super::{PwaError, PwaResult};

pub const DARE_MAX_ITER: usize = 10_000;
/// Bound on `‖P − f(P)‖_∞` for a returned solution.
pub const DARE_TOL: f64 = 1e-10;

/// One Riccati map `Q + AᵀPA − AᵀPB (R + BᵀPB)⁻¹ BᵀPA`.
fn riccati_map(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Option<DMatrix<f64>> {
    let pa = p * a;
    let pb = p * b;
    let s = r + b.transpose() * &pb;
    let gain = s.lu().solve(&(pb.transpose() * a))?;
    let next = q + a.transpose() * &pa - (a.transpose() * &pb) * gain;
    Some((&next + next.transpose()) * 0.5)
}

/// `‖P − (Q + AᵀPA − AᵀPB(R+BᵀPB)⁻¹BᵀPA)‖_∞`, or `∞` if `R + BᵀPB` is singular.
pub fn dare_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    riccati_map(a, b, q, r, p).map_or(f64::INFINITY, |next| (p - next).amax())
}

/// Solves the DARE with the default iteration limit.
pub fn solve_dare(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> PwaResult<DMatrix<f64>> {
    solve_dare_with(a, b, q, r, DARE_MAX_ITER)
}

/// Fixed-point iteration of the Riccati map started from `P₀ = Q`.
pub fn solve_dare_with(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    max_iter: usize,
) -> PwaResult<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (b.ncols(), b.ncols()) {
        return Err(PwaError::DimensionMismatch(format!(
            "A {:?}, B {:?}, Q {:?}, R {:?}",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    let mut p = q.clone();
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let next = riccati_map(a, b, q, r, &p).ok_or_else(|| PwaError::NoConvergence {
            iterations: 0,
            residual: f64::INFINITY,
        })?;
        residual = (&next - &p).amax();
        p = next;
        if !residual.is_finite() {
            break;
        }
        if residual < 0.1 * DARE_TOL {
            return Ok(p);
        }
    }
    // Round-off can keep the step size just above the target for large P.
    let final_residual = dare_residual(a, b, q, r, &p);
    if final_residual < DARE_TOL {
        return Ok(p);
    }
    Err(PwaError::NoConvergence {
        iterations: max_iter,
        residual: final_residual.min(residual),
    })
}

/// `K = (R + BᵀPB)⁻¹ BᵀPA`, so that `u = −K x`.
pub fn lqr_gain(a: &DMatrix<f64>, b: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> PwaResult<DMatrix<f64>> {
    let pb = p * b;
    let s = r + b.transpose() * &pb;
    s.lu()
        .solve(&(pb.transpose() * a))
        .ok_or_else(|| PwaError::InvalidParameter("R + BᵀPB is singular".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn scalar_golden_ratio() {
        // P = 1 + P − P²/(1 + P)  ⇔  P² = P + 1.
        let one = m(1, 1, &[1.0]);
        let p = solve_dare(&one, &one, &one, &one).unwrap();
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((p[(0, 0)] - golden).abs() < 1e-10);
    }

    #[test]
    fn zero_input_matrix_gives_lyapunov_sum() {
        let a = m(2, 2, &[0.5, 0.2, -0.1, 0.3]);
        let b = DMatrix::zeros(2, 1);
        let q = DMatrix::identity(2, 2);
        let r = m(1, 1, &[1.0]);
        let p = solve_dare(&a, &b, &q, &r).unwrap();
        // Truncated series Σ (Aᵀ)ᵏ Q Aᵏ.
        let mut oracle = DMatrix::zeros(2, 2);
        let mut ak = DMatrix::<f64>::identity(2, 2);
        for _ in 0..200 {
            oracle += ak.transpose() * &q * &ak;
            ak = &ak * &a;
        }
        assert!((p - oracle).amax() < 1e-10);
    }

    #[test]
    fn zero_dynamics_collapse_to_q() {
        let a = DMatrix::zeros(2, 2);
        let b = m(2, 1, &[0.0, 1.0]);
        let q = m(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let r = m(1, 1, &[1.0]);
        let p = solve_dare(&a, &b, &q, &r).unwrap();
        assert!((p - q).amax() < 1e-14);
    }

    #[test]
    fn unstabilizable_pair_does_not_converge() {
        let a = m(1, 1, &[2.0]);
        let b = m(1, 1, &[0.0]);
        let one = m(1, 1, &[1.0]);
        assert!(matches!(
            solve_dare_with(&a, &b, &one, &one, 500),
            Err(PwaError::NoConvergence { .. })
        ));
    }

    #[test]
    fn lqr_gain_stabilizes_double_integrator() {
        let dt = 0.01;
        let a = m(2, 2, &[1.0, dt, 0.0, 1.0]);
        let b = m(2, 1, &[0.0, dt]);
        let q = DMatrix::identity(2, 2);
        let r = m(1, 1, &[1e-3]);
        let p = solve_dare(&a, &b, &q, &r).unwrap();
        assert!(dare_residual(&a, &b, &q, &r, &p) < DARE_TOL);
        let k = lqr_gain(&a, &b, &r, &p).unwrap();
        let a_cl = &a - &b * &k;
        let eig = a_cl.complex_eigenvalues();
        assert!(eig.iter().all(|e| e.norm() < 1.0));
    }
}
