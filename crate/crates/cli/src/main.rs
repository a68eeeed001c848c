//! `lnms`: closed-loop runs, store improvement, benchmarks and partition
//! exports for the hybrid MPC toolkit.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lnms_core::bench::EnvId;

#[derive(Parser, Debug)]
#[command(name = "lnms", version, about = "Hybrid MPC with learned mode sequences")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Environment, overriding the config.
    #[arg(long, global = true)]
    env: Option<EnvId>,
    /// Zero every timing field in written artifacts.
    #[arg(long, global = true)]
    strip_timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-loop rollouts from random initial states with a shared store.
    Run(RunArgs),
    /// Relabel every sample of a store with a bounded branch-and-bound.
    Improve(ImproveArgs),
    /// Run one of the benchmark experiments.
    Bench(BenchArgs),
    /// Export the nearest-neighbor partition of a store on a 2-D grid.
    Partition(PartitionArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    rollouts: Option<usize>,
    /// Store to start from.
    #[arg(long)]
    store: Option<PathBuf>,
    /// Stop after this many control steps in total.
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args, Debug)]
struct ImproveArgs {
    #[arg(long)]
    store: Option<PathBuf>,
    /// Seconds per sample.
    #[arg(long)]
    budget: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Which {
    MipFraction,
    Wallclock,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, value_enum)]
    which: Which,
    /// Rollouts (mip-fraction) or instances (wallclock).
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Args, Debug)]
struct PartitionArgs {
    #[arg(long)]
    store: Option<PathBuf>,
    /// Grid points per axis, e.g. `200` or `200x50`.
    #[arg(long, value_parser = parse_resolution)]
    resolution: Option<[usize; 2]>,
    /// Leave the `u0` column as NaN instead of solving a QP per point.
    #[arg(long)]
    no_u0: bool,
}

fn parse_resolution(s: &str) -> Result<[usize; 2], String> {
    let parse = |p: &str| p.trim().parse::<usize>().map_err(|e| format!("bad resolution `{s}`: {e}"));
    match s.split_once('x') {
        Some((a, b)) => Ok([parse(a)?, parse(b)?]),
        None => {
            let n = parse(s)?;
            Ok([n, n])
        }
    }
}

/// Failure with its exit status: 2 for usage and configuration problems, 1
/// for everything that goes wrong while running.
#[derive(Debug)]
pub struct CliError {
    code: u8,
    error: anyhow::Error,
}

impl CliError {
    pub fn usage(msg: impl fmt::Display) -> Self {
        Self {
            code: 2,
            error: anyhow::anyhow!("{msg}"),
        }
    }
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        Self { code: 1, error: e.into() }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LNMS_LOG", "warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            ExitCode::from(e.code)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let mut cfg = config::RunConfig::load(cli.config.as_deref())?;
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(env) = cli.env {
        cfg.env = env;
    }
    let strip = cli.strip_timing;
    match cli.command {
        Command::Run(a) => {
            override_opt(&mut cfg.rollouts, a.rollouts);
            cfg.store = a.store.or(cfg.store);
            cfg.step_budget = a.steps.or(cfg.step_budget);
            cfg.validate()?;
            commands::run(&cfg, strip)
        }
        Command::Improve(a) => {
            cfg.store = a.store.or(cfg.store);
            override_opt(&mut cfg.budget, a.budget);
            cfg.validate()?;
            commands::improve(&cfg)
        }
        Command::Bench(a) => {
            match a.which {
                Which::MipFraction => override_opt(&mut cfg.rollouts, a.n),
                Which::Wallclock => override_opt(&mut cfg.n_ocps, a.n),
            }
            cfg.validate()?;
            match a.which {
                Which::MipFraction => commands::bench_mip_fraction(&cfg, strip),
                Which::Wallclock => commands::bench_wallclock(&cfg, strip),
            }
        }
        Command::Partition(a) => {
            cfg.store = a.store.or(cfg.store);
            override_opt(&mut cfg.resolution, a.resolution);
            if a.no_u0 {
                cfg.with_u0 = false;
            }
            cfg.validate()?;
            commands::partition(&cfg)
        }
    }
}

fn override_opt<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}
