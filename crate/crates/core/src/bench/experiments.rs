use std::io::Write;
use std::time::Instant;

use log::info;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{closed_loop_rollout, BenchResult, Environment, Region, RolloutRecord, Termination};
use crate::lnms::{LnmsController, LnmsError, SampleStore};
use crate::miqp::{solve_bnb, BnbConfig, MiqpError};

/// Draws `n` initial states uniformly from `region` with a ChaCha8 stream
/// seeded by `seed`.
pub fn sample_states(region: &Region, n: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| region.sample(&mut rng)).collect()
}

/// Ranks starting at 1, ties share their average rank.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation and its two-sided p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub rho: f64,
    pub p_value: f64,
}

/// Spearman correlation between `xs` and `ys`, with the p-value from the
/// Student-t approximation on `n − 2` degrees of freedom. `None` for fewer
/// than three points or a constant series.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<Trend> {
    let n = xs.len();
    if n < 3 || ys.len() != n {
        return None;
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let mean = (n as f64 + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (a, b) = (rx[i] - mean, ry[i] - mean);
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    let rho = sxy / (sxx * syy).sqrt();
    let df = (n - 2) as f64;
    let p_value = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).ok()?;
        2.0 * (1.0 - dist.cdf(t.abs()))
    };
    Some(Trend { rho, p_value })
}

/// Fraction of `true` entries in each consecutive block of `window` flags;
/// a trailing partial block is dropped.
pub fn window_fractions(flags: &[bool], window: usize) -> Vec<f64> {
    if window == 0 {
        return Vec::new();
    }
    flags
        .chunks_exact(window)
        .map(|c| c.iter().filter(|&&f| f).count() as f64 / window as f64)
        .collect()
}

/// Knobs of the closed-loop experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentOptions {
    /// Control steps per rollout.
    pub max_steps: usize,
    pub convergence_eps: f64,
    /// Steps per point of the MIP-fraction curve.
    pub window: usize,
    /// Stop once this many control steps have been taken in total.
    pub step_budget: Option<usize>,
    /// Overrides the environment's solver settings.
    pub bnb: Option<BnbConfig>,
    /// Overwrite the label of exactly repeated states.
    pub dedup: bool,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            max_steps: 1000,
            convergence_eps: 0.01,
            window: 100,
            step_budget: None,
            bnb: None,
            dedup: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub env: String,
    pub config: serde_json::Value,
    pub rollouts: usize,
    pub converged: usize,
    pub infeasible: usize,
    pub total_steps: usize,
    pub mip_steps: usize,
    pub window: usize,
    /// MIP fraction of each window, in order.
    pub curve: Vec<f64>,
    pub trend: Option<Trend>,
    pub store_size: usize,
    /// Seconds spent in solver calls over all rollouts.
    pub lnms_seconds: f64,
}

impl BenchReport {
    pub fn without_timing(&self) -> Self {
        Self {
            lnms_seconds: 0.0,
            ..self.clone()
        }
    }

    /// CSV with header `window,mip_fraction`.
    pub fn write_curve_csv<W: Write>(&self, out: W) -> BenchResult<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["window", "mip_fraction"])?;
        for (i, f) in self.curve.iter().enumerate() {
            w.write_record([i.to_string(), f.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Everything a MIP-fraction run produces.
pub struct ExperimentOutput {
    pub report: BenchReport,
    pub rollouts: Vec<RolloutRecord>,
    pub store: SampleStore,
}

/// Closed-loop rollouts from uniformly drawn initial states, all sharing one
/// growing sample store, summarized by the per-window fraction of steps that
/// needed branch-and-bound and its Spearman trend against the window index.
pub fn run_mip_fraction_experiment(
    env: &Environment,
    n_rollouts: usize,
    region: Option<&Region>,
    seed: u64,
    options: &ExperimentOptions,
    initial_store: Option<SampleStore>,
) -> BenchResult<ExperimentOutput> {
    let region = region.unwrap_or(&env.region);
    region.validate(Some(env.ocp.system.n_x()))?;
    let store = match initial_store {
        Some(s) => s,
        None => SampleStore::new(env.weights.clone())?.with_dedup(options.dedup),
    };
    let bnb = options.bnb.unwrap_or(env.bnb);
    let mut controller = LnmsController::new(env.ocp.clone(), store, bnb)?;
    let mut rollouts = Vec::new();
    let mut total = 0usize;
    for x0 in sample_states(region, n_rollouts, seed) {
        let remaining = options.step_budget.map_or(options.max_steps, |b| options.max_steps.min(b - total));
        let record = closed_loop_rollout(&mut controller, &x0, remaining, options.convergence_eps)?;
        total += record.steps.len();
        info!(
            "rollout {}: {:?} after {} steps, {} MIP",
            rollouts.len(),
            record.terminated,
            record.steps.len(),
            record.mip_steps()
        );
        rollouts.push(record);
        if options.step_budget.is_some_and(|b| total >= b) {
            break;
        }
    }

    let flags: Vec<bool> = rollouts.iter().flat_map(|r| r.steps.iter().map(|s| s.mip_invoked)).collect();
    let curve = window_fractions(&flags, options.window);
    let index: Vec<f64> = (0..curve.len()).map(|i| i as f64).collect();
    let report = BenchReport {
        env: env.id.to_string(),
        config: serde_json::json!({
            "n_rollouts": n_rollouts,
            "seed": seed,
            "region": region,
            "options": options,
            "bnb": bnb,
        }),
        rollouts: rollouts.len(),
        converged: rollouts.iter().filter(|r| r.terminated == Termination::Converged).count(),
        infeasible: rollouts.iter().filter(|r| r.terminated == Termination::Infeasible).count(),
        total_steps: flags.len(),
        mip_steps: flags.iter().filter(|&&f| f).count(),
        window: options.window,
        trend: spearman(&index, &curve),
        curve,
        store_size: controller.store().len(),
        lnms_seconds: rollouts.iter().map(|r| r.solve_time()).sum(),
    };
    Ok(ExperimentOutput {
        report,
        rollouts,
        store: controller.into_store(),
    })
}

/// Total solve times of the cached controller against cold branch-and-bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingTable {
    pub env: String,
    pub n_ocps: usize,
    pub seed: u64,
    pub lnms_seconds: f64,
    pub mip_seconds: f64,
    /// `mip_seconds / lnms_seconds`.
    pub ratio: f64,
    pub lnms_mip_invocations: usize,
    pub lnms_qp_only: usize,
    /// Instances both methods report infeasible.
    pub infeasible: usize,
    /// Largest `(LNMS objective − MIP objective) / max(1, |MIP objective|)`.
    pub max_relative_suboptimality: f64,
}

impl TimingTable {
    pub fn without_timing(&self) -> Self {
        Self {
            lnms_seconds: 0.0,
            mip_seconds: 0.0,
            ratio: 0.0,
            ..self.clone()
        }
    }

    /// CSV with header `env,n_ocps,lnms_seconds,mip_seconds,ratio`.
    pub fn write_csv<W: Write>(&self, out: W) -> BenchResult<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["env", "n_ocps", "lnms_seconds", "mip_seconds", "ratio"])?;
        w.write_record([
            self.env.clone(),
            self.n_ocps.to_string(),
            format!("{:.3}", self.lnms_seconds),
            format!("{:.3}", self.mip_seconds),
            format!("{:.3}", self.ratio),
        ])?;
        w.flush()?;
        Ok(())
    }
}

/// Solves the OCP at `n_ocps` random initial states twice: once through a
/// cached controller that stops at the first feasible solution and keeps its
/// store between instances, once by cold branch-and-bound with the
/// environment's settings.
pub fn run_wallclock_comparison(env: &Environment, n_ocps: usize, seed: u64) -> BenchResult<TimingTable> {
    let states = sample_states(&env.region, n_ocps, seed);
    let store = SampleStore::new(env.weights.clone())?;
    let lnms_config = BnbConfig {
        stop_at_first_feasible: true,
        ..env.bnb
    };
    let mut controller = LnmsController::new(env.ocp.clone(), store, lnms_config)?;
    let mut lnms_seconds = 0.0;
    let mut lnms_objectives = Vec::with_capacity(n_ocps);
    for x in &states {
        let started = Instant::now();
        let out = controller.control_step(x);
        lnms_seconds += started.elapsed().as_secs_f64();
        lnms_objectives.push(match out {
            Ok(o) => Some(o.record.objective),
            Err(LnmsError::Miqp(MiqpError::InfeasibleProblem)) => None,
            Err(e) => return Err(e.into()),
        });
    }

    let mut mip_seconds = 0.0;
    let mut infeasible = 0;
    let mut worst = 0.0_f64;
    for (x, lnms_obj) in states.iter().zip(&lnms_objectives) {
        let started = Instant::now();
        let sol = solve_bnb(&env.ocp, x, None, &env.bnb);
        mip_seconds += started.elapsed().as_secs_f64();
        match sol {
            Ok(sol) => {
                if let Some(l) = lnms_obj {
                    worst = worst.max((l - sol.objective) / sol.objective.abs().max(1.0));
                }
            }
            Err(MiqpError::InfeasibleProblem) => {
                if lnms_obj.is_none() {
                    infeasible += 1;
                }
            }
            Err(e) => return Err(e.into()),
        }
    }
    let stats = controller.stats();
    Ok(TimingTable {
        env: env.id.to_string(),
        n_ocps,
        seed,
        lnms_seconds,
        mip_seconds,
        ratio: mip_seconds / lnms_seconds,
        lnms_mip_invocations: stats.mip_invocations,
        lnms_qp_only: stats.qp_only_steps,
        infeasible,
        max_relative_suboptimality: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn spearman_of_monotone_series() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let t = spearman(&x, &[5.0, 4.0, 3.0, 2.5, 0.0]).unwrap();
        assert_eq!(t.rho, -1.0);
        assert_eq!(t.p_value, 0.0);
        assert!(spearman(&x, &[1.0; 5]).is_none());
    }

    #[test]
    fn spearman_matches_hand_computation() {
        // d = rank differences (0, -1, 1, 0, 0): ρ = 1 − 6·2 / (5·24) = 0.9.
        let t = spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[1.0, 3.0, 2.0, 4.0, 5.0]).unwrap();
        assert!((t.rho - 0.9).abs() < 1e-12);
        // t = 0.9·sqrt(3/0.19) = 3.576; two-sided p on 3 dof ≈ 0.0374.
        assert!((t.p_value - 0.0374).abs() < 5e-4, "{}", t.p_value);
    }

    #[test]
    fn window_fractions_drop_partial_tail() {
        let flags = [true, false, true, true, false];
        assert_eq!(window_fractions(&flags, 2), vec![0.5, 1.0]);
        assert!(window_fractions(&flags, 0).is_empty());
    }

    #[test]
    fn sampling_is_seeded() {
        let region = Region::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
        let a = sample_states(&region, 5, 3);
        assert_eq!(a, sample_states(&region, 5, 3));
        assert_ne!(a, sample_states(&region, 5, 4));
        assert!(a.iter().all(|x| (0.0..1.0).contains(&x[0])));
    }
}
