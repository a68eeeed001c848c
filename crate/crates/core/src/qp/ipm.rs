use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::{
    kkt_residuals, DenseQp, InfeasibilityCertificate, QpResult, QpSettings, QpSolution, QpStatus,
};

/// Primal regularization on the reduced Newton system.
const REG_PRIMAL: f64 = 1e-10;
/// Dual regularization on the equality block.
const REG_DUAL: f64 = 1e-10;
const STEP_FRACTION: f64 = 0.995;
const REFINE_STEPS: usize = 3;
/// Coefficients smaller than this are treated as structural zeros.
const ZERO_COEF: f64 = 0.0;

/// Row-compressed constraint matrix used inside the interior-point loop.
#[derive(Debug, Clone)]
struct Rows {
    rows: Vec<Vec<(usize, f64)>>,
}

impl Rows {
    fn from_dense(m: &DMatrix<f64>, keep: &[usize]) -> Self {
        let rows = keep
            .iter()
            .map(|&i| {
                (0..m.ncols())
                    .filter_map(|j| {
                        let v = m[(i, j)];
                        (v.abs() > ZERO_COEF).then_some((j, v))
                    })
                    .collect()
            })
            .collect();
        Self { rows }
    }

    fn len(&self) -> usize {
        self.rows.len()
    }

    fn mul(&self, z: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.rows.len(),
            self.rows.iter().map(|r| r.iter().map(|&(j, v)| v * z[j]).sum::<f64>()),
        )
    }

    /// `out += Aᵀ y`
    fn tmul_add(&self, y: &DVector<f64>, out: &mut DVector<f64>) {
        for (r, &yi) in self.rows.iter().zip(y.iter()) {
            if yi != 0.0 {
                for &(j, v) in r {
                    out[j] += v * yi;
                }
            }
        }
    }
}

/// Problem data in the form consumed by the interior-point loop.
struct Problem {
    h: DMatrix<f64>,
    g: DVector<f64>,
    a_eq: Rows,
    b_eq: DVector<f64>,
    a_in: Rows,
    b_in: DVector<f64>,
}

impl Problem {
    fn n(&self) -> usize {
        self.g.len()
    }
}

struct Tolerances {
    stationarity: f64,
    feasibility: f64,
    complementarity: f64,
}

struct IpmOutcome {
    z: DVector<f64>,
    y: DVector<f64>,
    lambda: DVector<f64>,
    converged: bool,
    /// The loop gave up early because primal feasibility stopped improving.
    stalled: bool,
    iterations: usize,
}

/// Iterations after which a stagnating primal residual ends the main loop.
const STALL_MIN_ITER: usize = 30;
const STALL_WINDOW: usize = 10;

/// Interior-point QP solver. Holds the Newton-system workspace, so one
/// instance should be used per thread.
#[derive(Debug, Clone)]
pub struct QpSolver {
    settings: QpSettings,
    kkt: DMatrix<f64>,
}

impl Default for QpSolver {
    fn default() -> Self {
        Self::new(QpSettings::default())
    }
}

impl QpSolver {
    pub fn new(settings: QpSettings) -> Self {
        Self {
            settings,
            kkt: DMatrix::zeros(0, 0),
        }
    }

    pub fn settings(&self) -> &QpSettings {
        &self.settings
    }

    pub fn solve(&mut self, qp: &DenseQp) -> QpResult<QpSolution> {
        qp.validate()?;
        let start = Instant::now();
        let n = qp.num_vars();
        let finish = |z: DVector<f64>,
                          lambda_eq: DVector<f64>,
                          lambda_in: DVector<f64>,
                          status: QpStatus,
                          iterations: usize,
                          certificate: Option<InfeasibilityCertificate>| QpSolution {
            objective: qp.objective(&z),
            z,
            lambda_eq,
            lambda_in,
            status,
            iterations,
            solve_time: start.elapsed().as_secs_f64(),
            certificate,
        };

        // Presolve: constraint rows without coefficients are either vacuous or
        // contradict themselves.
        let (eq_keep, eq_bad) = split_empty_rows(&qp.a_eq, &qp.b_eq, true, self.settings.infeasibility_threshold);
        let (in_keep, in_bad) = split_empty_rows(&qp.a_in, &qp.b_in, false, self.settings.infeasibility_threshold);
        if let Some(cert) = empty_row_certificate(qp, eq_bad, in_bad) {
            return Ok(finish(
                DVector::zeros(n),
                DVector::zeros(qp.num_eq()),
                DVector::zeros(qp.num_in()),
                QpStatus::Infeasible,
                0,
                Some(cert),
            ));
        }

        let problem = Problem {
            h: qp.h.clone(),
            g: qp.g.clone(),
            a_eq: Rows::from_dense(&qp.a_eq, &eq_keep),
            b_eq: DVector::from_iterator(eq_keep.len(), eq_keep.iter().map(|&i| qp.b_eq[i])),
            a_in: Rows::from_dense(&qp.a_in, &in_keep),
            b_in: DVector::from_iterator(in_keep.len(), in_keep.iter().map(|&i| qp.b_in[i])),
        };
        // Aim below the reported contract so the final check has headroom.
        let tol = Tolerances {
            stationarity: 0.1 * self.settings.tol_stationarity,
            feasibility: 0.1 * self.settings.tol_feasibility,
            complementarity: 0.1 * self.settings.tol_complementarity,
        };
        let mut out = self.run(&problem, &tol, self.settings.max_iter, true);
        let mut extra_iterations = 0;
        let expand = |out: &IpmOutcome| {
            let mut lambda_eq = DVector::zeros(qp.num_eq());
            for (k, &i) in eq_keep.iter().enumerate() {
                lambda_eq[i] = out.y[k];
            }
            let mut lambda_in = DVector::zeros(qp.num_in());
            for (k, &i) in in_keep.iter().enumerate() {
                lambda_in[i] = out.lambda[k];
            }
            (lambda_eq, lambda_in)
        };

        let (lambda_eq, lambda_in) = expand(&out);
        let res = kkt_residuals(qp, &out.z, &lambda_eq, &lambda_in);
        if res.satisfies(&self.settings) {
            return Ok(finish(out.z, lambda_eq, lambda_in, QpStatus::Optimal, out.iterations, None));
        }
        if out.converged {
            log::debug!("interior point converged but KKT check failed: {res:?}");
        }

        let (point, phase1) = self.min_slack_point(qp);
        extra_iterations += phase1.iterations;
        let iterations = out.iterations + extra_iterations;
        if phase1.converged && phase1.min_slack > self.settings.infeasibility_threshold {
            let cert = InfeasibilityCertificate {
                y_eq: phase1.y_eq,
                y_in: phase1.y_in,
                min_slack: phase1.min_slack,
            };
            return Ok(finish(
                point,
                DVector::zeros(qp.num_eq()),
                DVector::zeros(qp.num_in()),
                QpStatus::Infeasible,
                iterations,
                Some(cert),
            ));
        }
        if out.stalled {
            // Not infeasible after all: give the main loop its full budget.
            extra_iterations += out.iterations;
            out = self.run(&problem, &tol, self.settings.max_iter, false);
        }
        let iterations = out.iterations + extra_iterations;
        let (lambda_eq, lambda_in) = expand(&out);
        let status = if kkt_residuals(qp, &out.z, &lambda_eq, &lambda_in).satisfies(&self.settings) {
            QpStatus::Optimal
        } else {
            QpStatus::MaxIter
        };
        Ok(finish(out.z, lambda_eq, lambda_in, status, iterations, None))
    }

    /// Minimizes the largest constraint violation `t` over `(z, t)` with
    /// `t ≥ −1`. Returns the minimizing point and the auxiliary solution.
    pub(crate) fn min_slack_point(&mut self, qp: &DenseQp) -> (DVector<f64>, Phase1) {
        let n = qp.num_vars();
        let me = qp.num_eq();
        let mi = qp.num_in();
        let nt = n + 1;
        let t_col = n;

        let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(mi + 2 * me + 1);
        let mut rhs: Vec<f64> = Vec::with_capacity(mi + 2 * me + 1);
        let dense_row = |m: &DMatrix<f64>, i: usize, sign: f64| -> Vec<(usize, f64)> {
            let mut r: Vec<(usize, f64)> = (0..n)
                .filter_map(|j| {
                    let v = m[(i, j)];
                    (v != 0.0).then_some((j, sign * v))
                })
                .collect();
            r.push((t_col, -1.0));
            r
        };
        for i in 0..mi {
            rows.push(dense_row(&qp.a_in, i, 1.0));
            rhs.push(qp.b_in[i]);
        }
        for i in 0..me {
            rows.push(dense_row(&qp.a_eq, i, 1.0));
            rhs.push(qp.b_eq[i]);
            rows.push(dense_row(&qp.a_eq, i, -1.0));
            rhs.push(-qp.b_eq[i]);
        }
        rows.push(vec![(t_col, -1.0)]);
        rhs.push(1.0);

        let mut g = DVector::zeros(nt);
        g[t_col] = 1.0;
        let problem = Problem {
            h: DMatrix::zeros(nt, nt),
            g,
            a_eq: Rows { rows: Vec::new() },
            b_eq: DVector::zeros(0),
            a_in: Rows { rows },
            b_in: DVector::from_vec(rhs),
        };
        let tol = Tolerances {
            stationarity: 1e-10,
            feasibility: 1e-10,
            complementarity: 1e-11,
        };
        let out = self.run(&problem, &tol, self.settings.max_iter, false);
        let z = out.z.rows(0, n).into_owned();
        let t = out.z[t_col];
        let y_in = out.lambda.rows(0, mi).into_owned();
        let y_eq = DVector::from_iterator(
            me,
            (0..me).map(|i| out.lambda[mi + 2 * i] - out.lambda[mi + 2 * i + 1]),
        );
        (
            z,
            Phase1 {
                min_slack: t,
                y_eq,
                y_in,
                converged: out.converged,
                iterations: out.iterations,
            },
        )
    }

    /// Mehrotra predictor-corrector on the reduced Newton system.
    fn run(&mut self, p: &Problem, tol: &Tolerances, max_iter: usize, stop_on_stall: bool) -> IpmOutcome {
        let n = p.n();
        let me = p.a_eq.len();
        let mi = p.a_in.len();
        let dim = n + me;

        let mut z = self.initial_point(p);
        let mut y = DVector::zeros(me);
        let mut s = &p.b_in - p.a_in.mul(&z);
        let mut lambda = DVector::from_element(mi, 1.0);
        if mi > 0 {
            let shift = (-1.5 * s.min()).max(0.0);
            s.add_scalar_mut(shift);
            for v in s.iter_mut() {
                *v = v.max(1e-2);
            }
            let mu0 = s.dot(&lambda) / mi as f64;
            for (sv, lv) in s.iter_mut().zip(lambda.iter_mut()) {
                *sv = sv.max(mu0.sqrt().min(1.0));
                *lv = (mu0 / *sv).max(1e-2);
            }
        }

        let mut converged = false;
        let mut stalled = false;
        let mut iterations = 0;
        let mut stalls = 0;
        let mut feas_history: Vec<f64> = Vec::new();
        for iter in 0..max_iter {
            iterations = iter;
            let mut r_d = &p.h * &z + &p.g;
            p.a_eq.tmul_add(&y, &mut r_d);
            p.a_in.tmul_add(&lambda, &mut r_d);
            let r_e = p.a_eq.mul(&z) - &p.b_eq;
            let r_i = p.a_in.mul(&z) + &s - &p.b_in;

            let stat = r_d.amax();
            let feas = r_e.amax().max(r_i.amax());
            let comp = s.iter().zip(lambda.iter()).map(|(a, b)| a * b).fold(0.0, f64::max);
            if stat <= tol.stationarity && feas <= tol.feasibility && comp <= tol.complementarity {
                converged = true;
                break;
            }
            if !(z.amax().is_finite() && lambda.amax() < 1e15 && z.amax() < 1e15) {
                break;
            }
            feas_history.push(feas);
            if stop_on_stall && iter >= STALL_MIN_ITER && feas > tol.feasibility {
                let before = feas_history[iter - STALL_WINDOW];
                if feas > 0.9 * before {
                    stalled = true;
                    break;
                }
            }
            let mu = if mi > 0 { s.dot(&lambda) / mi as f64 } else { 0.0 };

            // Reduced system [H + Aᵀ W A, A_eqᵀ; A_eq, 0] with W = Λ S⁻¹.
            let w = lambda.component_div(&s);
            self.kkt = DMatrix::zeros(dim, dim);
            self.kkt.view_mut((0, 0), (n, n)).copy_from(&p.h);
            for (row, &wi) in p.a_in.rows.iter().zip(w.iter()) {
                for &(j, vj) in row {
                    for &(k, vk) in row {
                        self.kkt[(j, k)] += wi * vj * vk;
                    }
                }
            }
            for (i, row) in p.a_eq.rows.iter().enumerate() {
                for &(j, v) in row {
                    self.kkt[(n + i, j)] = v;
                    self.kkt[(j, n + i)] = v;
                }
            }
            let unreg = self.kkt.clone();
            for j in 0..n {
                self.kkt[(j, j)] += REG_PRIMAL;
            }
            for i in 0..me {
                self.kkt[(n + i, n + i)] -= REG_DUAL;
            }
            let lu = self.kkt.clone().lu();

            let solve_dir = |r_c: &DVector<f64>| -> Option<(DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>)> {
                // dλ = S⁻¹(Λ r_i − r_c) + W A dz
                let tmp = (lambda.component_mul(&r_i) - r_c).component_div(&s);
                let mut rhs_z = -&r_d;
                let mut corr = DVector::zeros(n);
                p.a_in.tmul_add(&tmp, &mut corr);
                rhs_z -= corr;
                let mut rhs = DVector::zeros(dim);
                rhs.rows_mut(0, n).copy_from(&rhs_z);
                rhs.rows_mut(n, me).copy_from(&(-&r_e));
                let mut sol = lu.solve(&rhs)?;
                for _ in 0..REFINE_STEPS {
                    let resid = &rhs - &unreg * &sol;
                    if resid.amax() <= 1e-15 * rhs.amax().max(1.0) {
                        break;
                    }
                    sol += lu.solve(&resid)?;
                }
                let dz = sol.rows(0, n).into_owned();
                let dy = sol.rows(n, me).into_owned();
                let ds = -&r_i - p.a_in.mul(&dz);
                let dl = (-r_c - lambda.component_mul(&ds)).component_div(&s);
                Some((dz, dy, ds, dl))
            };

            let r_aff = s.component_mul(&lambda);
            let Some((_, _, ds_a, dl_a)) = solve_dir(&r_aff) else {
                break;
            };
            let alpha_aff = max_step(&s, &ds_a).min(max_step(&lambda, &dl_a));
            let sigma = if mi > 0 {
                let mu_aff = (&s + &ds_a * alpha_aff).dot(&(&lambda + &dl_a * alpha_aff)) / mi as f64;
                (mu_aff / mu).powi(3).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let r_c = r_aff + ds_a.component_mul(&dl_a) - DVector::from_element(mi, sigma * mu);
            let Some((dz, dy, ds, dl)) = solve_dir(&r_c) else {
                break;
            };
            let alpha_max = max_step(&s, &ds).min(max_step(&lambda, &dl));
            let alpha = (STEP_FRACTION * alpha_max).min(1.0);
            if alpha < 1e-10 {
                stalls += 1;
                if stalls >= 3 {
                    break;
                }
            } else {
                stalls = 0;
            }
            z += &dz * alpha;
            y += &dy * alpha;
            s += &ds * alpha;
            lambda += &dl * alpha;
            for v in s.iter_mut() {
                *v = v.max(1e-300);
            }
            for v in lambda.iter_mut() {
                *v = v.max(1e-300);
            }
            iterations = iter + 1;
        }

        IpmOutcome {
            z,
            y,
            lambda,
            converged,
            stalled,
            iterations,
        }
    }

    /// Least-squares start: minimizes the cost plus `½‖A_in z − b_in‖²`
    /// subject to the equalities.
    fn initial_point(&self, p: &Problem) -> DVector<f64> {
        let n = p.n();
        let me = p.a_eq.len();
        let dim = n + me;
        let mut k = DMatrix::zeros(dim, dim);
        k.view_mut((0, 0), (n, n)).copy_from(&p.h);
        for row in &p.a_in.rows {
            for &(j, vj) in row {
                for &(l, vl) in row {
                    k[(j, l)] += vj * vl;
                }
            }
        }
        for j in 0..n {
            k[(j, j)] += 1e-8;
        }
        for (i, row) in p.a_eq.rows.iter().enumerate() {
            for &(j, v) in row {
                k[(n + i, j)] = v;
                k[(j, n + i)] = v;
            }
            k[(n + i, n + i)] = -1e-8;
        }
        let mut rhs = DVector::zeros(dim);
        let mut top = -&p.g;
        p.a_in.tmul_add(&p.b_in, &mut top);
        rhs.rows_mut(0, n).copy_from(&top);
        rhs.rows_mut(n, me).copy_from(&p.b_eq);
        match k.lu().solve(&rhs) {
            Some(sol) if sol.iter().all(|v| v.is_finite()) => sol.rows(0, n).into_owned(),
            _ => DVector::zeros(n),
        }
    }
}

pub(crate) struct Phase1 {
    pub min_slack: f64,
    pub y_eq: DVector<f64>,
    pub y_in: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Largest `α ∈ [0, 1/STEP_FRACTION]` keeping `v + α dv ≥ 0`.
fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    let mut alpha = 1.0 / STEP_FRACTION;
    for (&x, &dx) in v.iter().zip(dv.iter()) {
        if dx < 0.0 {
            alpha = alpha.min(-x / dx);
        }
    }
    alpha
}

/// Splits row indices into kept rows and contradictory empty rows.
fn split_empty_rows(a: &DMatrix<f64>, b: &DVector<f64>, equality: bool, thr: f64) -> (Vec<usize>, Vec<usize>) {
    let mut keep = Vec::new();
    let mut bad = Vec::new();
    for i in 0..a.nrows() {
        let empty = a.row(i).iter().all(|&v| v == 0.0);
        if !empty {
            keep.push(i);
            continue;
        }
        let violated = if equality { b[i].abs() > thr } else { b[i] < -thr };
        if violated {
            bad.push(i);
        }
    }
    (keep, bad)
}

fn empty_row_certificate(qp: &DenseQp, eq_bad: Vec<usize>, in_bad: Vec<usize>) -> Option<InfeasibilityCertificate> {
    let mut y_eq = DVector::zeros(qp.num_eq());
    let mut y_in = DVector::zeros(qp.num_in());
    if let Some(&i) = in_bad.first() {
        y_in[i] = 1.0;
        return Some(InfeasibilityCertificate {
            y_eq,
            y_in,
            min_slack: -qp.b_in[i],
        });
    }
    if let Some(&i) = eq_bad.first() {
        y_eq[i] = -qp.b_eq[i].signum();
        return Some(InfeasibilityCertificate {
            y_eq,
            y_in,
            min_slack: qp.b_eq[i].abs(),
        });
    }
    None
}
