//! `subopt`: analyze, integrate, simulate and sweep parallel server networks.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use subopt_core::fluid::PerturbationKind;
use subopt_core::sim::ArrivalKind;

use crate::error::EXIT_USAGE;

/// Exit codes: 0 optimal or success, 10 suboptimal (analyze), 2 a modelling
/// assumption fails, 3 the epsilon regime is violated, 1 anything else.
#[derive(Debug, Parser)]
#[command(name = "subopt", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Static allocation, simple paths and the optimality verdict.
    Analyze(Common),
    /// Drain/hold fluid trajectory and its bound checks.
    Fluid(FluidArgs),
    /// One stochastic run.
    Simulate(SimulateArgs),
    /// Replicated runs over several scales.
    Sweep(SweepArgs),
    /// Write a network document (random critical or built-in).
    Gen(GenArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Built-in example network (1, 2 or 3).
    #[arg(long)]
    builtin: Option<u32>,
    /// Network JSON file.
    #[arg(long, value_name = "FILE")]
    network: Option<PathBuf>,
    /// JSON run config; flags override its values.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory [default: $SUBOPT_OUT_DIR, else the current directory].
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FluidArgs {
    #[command(flatten)]
    common: Common,
    /// Size of the initial deviation [default: 1e-3]
    #[arg(long)]
    eps: Option<f64>,
    /// Lifetime of the perturbation data.
    #[arg(long)]
    sigma: Option<f64>,
    /// Euler step in hold [default: min(1e-3, eps/10)].
    #[arg(long)]
    step: Option<f64>,
    /// zero, sinusoid or random-walk.
    #[arg(long)]
    pert: Option<PerturbationKind>,
    /// Seed for the random-walk perturbation.
    #[arg(long)]
    seed: Option<u64>,
    /// Keep every k-th sample in the trajectory CSV.
    #[arg(long, default_value_t = 1)]
    stride: usize,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Scale [default: 1600]
    #[arg(long)]
    n: Option<u64>,
    /// Horizon.
    #[arg(long = "T", alias = "horizon")]
    horizon: Option<f64>,
    /// Base seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Exponent in `n^-rho sup|X - X0|`.
    #[arg(long)]
    rho: Option<f64>,
    /// exponential, deterministic or uniform.
    #[arg(long)]
    arrivals: Option<ArrivalKind>,
    /// Also write the event log.
    #[arg(long)]
    log: bool,
    /// Stop after this many events.
    #[arg(long)]
    max_events: Option<u64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Comma separated scales.
    #[arg(long = "n", value_delimiter = ',')]
    n_list: Vec<u64>,
    /// Replications per scale [default: 20]
    #[arg(long)]
    reps: Option<u64>,
    /// Horizon [default: 10]
    #[arg(long = "T", alias = "horizon")]
    horizon: Option<f64>,
    /// Base seed; each run derives its own
    #[arg(long)]
    seed: Option<u64>,
    /// Exponent in `n^-rho sup|X - X0|` [default: 0.6]
    #[arg(long)]
    rho: Option<f64>,
    /// exponential, deterministic or uniform
    #[arg(long)]
    arrivals: Option<ArrivalKind>,
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Export a built-in network instead of drawing one.
    #[arg(long, conflicts_with_all = ["classes", "pools"])]
    builtin: Option<u32>,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 3)]
    pools: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write here instead of stdout.
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Analyze(a) => commands::analyze(&a),
        Command::Fluid(a) => commands::fluid(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Gen(a) => commands::gen(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            e.exit()
        }
    }
}
