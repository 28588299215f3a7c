//! `bsqz` - batch driver for the belief-compression pipeline.
//!
//! Subcommands: compress, solve, eval, diagnose, report. Each takes an
//! experiment config file (flat `key = value` lines) plus per-key overrides,
//! writes its artifacts under `<out>/<label>/`, and records a manifest.
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{cmd_compress, cmd_diagnose, cmd_eval, cmd_report, cmd_solve, CliError, Ctx};
use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "bsqz", version, about = "Linear belief compression for POMDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct CommonArgs {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override one config key, e.g. --set sampler.m=5000 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Set every *.seed key at once.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker-thread cap; results are identical for any value.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (overrides the config and BSQZ_OUT).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample beliefs and build a compression basis with its error report.
    Compress(CommonArgs),
    /// Solve the (possibly compressed) model by point-based value iteration.
    Solve(CommonArgs),
    /// Estimate policy quality by trajectory simulation.
    Eval(CommonArgs),
    /// Run the compression diagnostics suite (JSON lines).
    Diagnose(CommonArgs),
    /// Aggregate run directories into figure/table CSVs and SVG charts.
    Report(CommonArgs),
}

fn build_ctx(args: &CommonArgs) -> Result<Ctx, CliError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        for key in [
            "sampler.seed",
            "compressor.seed",
            "solver.seed",
            "eval.seed",
            "diagnose.seed",
        ] {
            cfg.set(&format!("{key}={seed}"))?;
        }
    }
    for assignment in &args.sets {
        cfg.set(assignment)?;
    }
    if let Some(out) = &args.out {
        cfg.set(&format!("out={}", out.display()))?;
    }
    if let Some(threads) = args.threads {
        if threads == 0 {
            return Err(CliError {
                exit_code: 2,
                message: "--threads must be >= 1".into(),
            });
        }
        // Ignore the error if a pool already exists (tests call this twice).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let stem = args
        .config
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "run".to_string());
    Ctx::new(cfg, &stem)
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Compress(a) => cmd_compress(&build_ctx(a)?),
        Command::Solve(a) => cmd_solve(&build_ctx(a)?),
        Command::Eval(a) => cmd_eval(&build_ctx(a)?),
        Command::Diagnose(a) => cmd_diagnose(&build_ctx(a)?),
        Command::Report(a) => cmd_report(&build_ctx(a)?),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bsqz: {e}");
            ExitCode::from(e.exit_code)
        }
    }
}
