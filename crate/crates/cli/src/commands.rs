use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use serde::Serialize;

use lnms_core::bench::{
    export_partition_grid, run_mip_fraction_experiment, run_wallclock_comparison, Environment, Termination,
};
use lnms_core::lnms::{improve_samples, SampleStore};

use crate::config::RunConfig;
use crate::CliError;

fn prepare_out(cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("cannot create {}", cfg.out.display()))?;
    write_json(&cfg.out.join("config.json"), cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn load_store(cfg: &RunConfig, env: &Environment) -> Result<Option<SampleStore>, CliError> {
    let Some(path) = &cfg.store else {
        return Ok(None);
    };
    let file = File::open(path).with_context(|| format!("cannot open store {}", path.display()))?;
    let store = SampleStore::read_jsonl(BufReader::new(file), env.weights.clone(), cfg.dedup)
        .with_context(|| format!("cannot read store {}", path.display()))?;
    Ok(Some(store))
}

fn require_store(cfg: &RunConfig, env: &Environment) -> Result<SampleStore, CliError> {
    load_store(cfg, env)?.ok_or_else(|| CliError::usage("no store given (use --store or the `store` config key)"))
}

fn save_store(store: &SampleStore, path: &Path) -> Result<(), CliError> {
    let mut w = create(path)?;
    store.write_jsonl(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn run(cfg: &RunConfig, strip_timing: bool) -> Result<(), CliError> {
    let env = cfg.environment()?;
    let initial = load_store(cfg, &env)?;
    prepare_out(cfg)?;
    let out = run_mip_fraction_experiment(
        &env,
        cfg.rollouts,
        None,
        cfg.seed,
        &cfg.experiment_options(),
        initial,
    )?;
    for (i, record) in out.rollouts.iter().enumerate() {
        println!(
            "rollout {i}: {} after {} steps, {} MIP, final |x| = {:.3e}",
            termination_name(record.terminated),
            record.steps.len(),
            record.mip_steps(),
            record.final_state.iter().map(|v| v * v).sum::<f64>().sqrt()
        );
        let record = if strip_timing { record.without_timing() } else { record.clone() };
        write_json(&cfg.out.join(format!("rollout_{i:04}.json")), &record)?;
    }
    save_store(&out.store, &cfg.out.join("store.jsonl"))?;
    let report = if strip_timing { out.report.without_timing() } else { out.report };
    write_json(&cfg.out.join("report.json"), &report)?;
    println!("store: {} samples", out.store.len());
    Ok(())
}

fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::Converged => "converged",
        Termination::MaxSteps => "step limit",
        Termination::Infeasible => "infeasible",
        Termination::SolverLimit => "solver limit",
    }
}

pub fn improve(cfg: &RunConfig) -> Result<(), CliError> {
    let env = cfg.environment()?;
    let mut store = require_store(cfg, &env)?;
    prepare_out(cfg)?;
    let report = improve_samples(&mut store, &env.ocp, cfg.budget, None)?;
    let mut w = create(&cfg.out.join("improvement.csv"))?;
    report.write_csv(&mut w)?;
    w.flush()?;
    save_store(&store, &cfg.out.join("store.jsonl"))?;
    println!(
        "{} samples, {} relabeled, {} skipped as infeasible",
        report.entries.len(),
        report.changed(),
        report.skipped()
    );
    Ok(())
}

pub fn bench_mip_fraction(cfg: &RunConfig, strip_timing: bool) -> Result<(), CliError> {
    let env = cfg.environment()?;
    prepare_out(cfg)?;
    let out = run_mip_fraction_experiment(&env, cfg.rollouts, None, cfg.seed, &cfg.experiment_options(), None)?;
    let report = if strip_timing { out.report.without_timing() } else { out.report };
    let mut w = create(&cfg.out.join("mip_fraction.csv"))?;
    report.write_curve_csv(&mut w)?;
    w.flush()?;
    write_json(&cfg.out.join("mip_fraction.json"), &report)?;
    match report.trend {
        Some(t) => println!(
            "{} steps, {} windows, Spearman rho = {:.3} (p = {:.3e}), {}",
            report.total_steps,
            report.curve.len(),
            t.rho,
            t.p_value,
            if t.rho < 0.0 { "decreasing" } else { "not decreasing" }
        ),
        None => println!(
            "{} steps, {} windows, too few windows for a trend",
            report.total_steps,
            report.curve.len()
        ),
    }
    Ok(())
}

pub fn bench_wallclock(cfg: &RunConfig, strip_timing: bool) -> Result<(), CliError> {
    let env = cfg.environment()?;
    prepare_out(cfg)?;
    let table = run_wallclock_comparison(&env, cfg.n_ocps, cfg.seed)?;
    println!(
        "{} instances: cached {:.3} s, cold MIP {:.3} s, ratio {:.2}",
        table.n_ocps, table.lnms_seconds, table.mip_seconds, table.ratio
    );
    let table = if strip_timing { table.without_timing() } else { table };
    write_json(&cfg.out.join("timing.json"), &table)?;
    let mut w = create(&cfg.out.join("timing.csv"))?;
    table.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn partition(cfg: &RunConfig) -> Result<(), CliError> {
    let env = cfg.environment()?;
    let store = require_store(cfg, &env)?;
    prepare_out(cfg)?;
    let bounds = cfg.bounds.clone().unwrap_or_else(|| env.region.clone());
    let ocp = cfg.with_u0.then_some(&env.ocp);
    let grid = export_partition_grid(&store, ocp, cfg.resolution, &bounds)?;
    let mut w = create(&cfg.out.join("partition.csv"))?;
    grid.write_csv(&mut w)?;
    w.flush()?;
    println!("{} grid points, {} distinct regions", grid.points.len(), grid.distinct_regions());
    Ok(())
}
