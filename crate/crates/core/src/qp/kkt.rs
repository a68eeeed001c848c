use nalgebra::DVector;

use super::{DenseQp, QpSettings};

/// First-order optimality residuals of a primal-dual pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// `‖Hz + g + A_eqᵀλ_eq + A_inᵀλ_in‖_∞`
    pub stationarity: f64,
    /// Largest equality or inequality violation.
    pub primal: f64,
    /// Most negative inequality multiplier, as a positive number.
    pub dual: f64,
    /// `max_i |λ_i (b_i − a_iᵀ z)|`
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.dual).max(self.complementarity)
    }

    pub fn within(&self, tol: f64) -> bool {
        self.max() < tol
    }

    pub(crate) fn satisfies(&self, s: &QpSettings) -> bool {
        self.stationarity < s.tol_stationarity
            && self.primal < s.tol_feasibility
            && self.dual < s.tol_feasibility
            && self.complementarity < s.tol_complementarity
    }
}

/// Evaluates the KKT conditions entrywise from the dense problem data.
pub fn kkt_residuals(
    qp: &DenseQp,
    z: &DVector<f64>,
    lambda_eq: &DVector<f64>,
    lambda_in: &DVector<f64>,
) -> KktResiduals {
    let n = qp.num_vars();
    let mut stationarity = 0.0_f64;
    for j in 0..n {
        let mut acc = qp.g[j];
        for k in 0..n {
            acc += qp.h[(j, k)] * z[k];
        }
        for i in 0..qp.num_eq() {
            acc += qp.a_eq[(i, j)] * lambda_eq[i];
        }
        for i in 0..qp.num_in() {
            acc += qp.a_in[(i, j)] * lambda_in[i];
        }
        stationarity = stationarity.max(acc.abs());
    }

    let mut primal = 0.0_f64;
    for i in 0..qp.num_eq() {
        let mut lhs = 0.0;
        for j in 0..n {
            lhs += qp.a_eq[(i, j)] * z[j];
        }
        primal = primal.max((lhs - qp.b_eq[i]).abs());
    }
    let mut dual = 0.0_f64;
    let mut complementarity = 0.0_f64;
    for i in 0..qp.num_in() {
        let mut lhs = 0.0;
        for j in 0..n {
            lhs += qp.a_in[(i, j)] * z[j];
        }
        let slack = qp.b_in[i] - lhs;
        primal = primal.max(-slack);
        dual = dual.max(-lambda_in[i]);
        complementarity = complementarity.max((lambda_in[i] * slack).abs());
    }
    KktResiduals {
        stationarity,
        primal,
        dual,
        complementarity,
    }
}
