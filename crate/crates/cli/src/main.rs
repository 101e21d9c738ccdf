//! `rjacobi <command> --config FILE [--threads N] [--out DIR]`
//!
//! Exit status 0 on success, 2 when the config does not validate, 1 when a
//! computation fails.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde::Serialize;

use config::{Command, ConfigError, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "rjacobi",
    version,
    about = "Simulation and estimation for the fBm-driven Jacobi equation"
)]
struct Cli {
    command: Command,
    /// JSON run config, or the manifest of an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Cap on worker threads for ensemble runs.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: Command,
    seed: u64,
    version: &'static str,
    outputs: &'a [String],
    wall_time_seconds: f64,
    config: &'a RunConfig,
}

enum Failure {
    Config(ConfigError),
    Compute(anyhow::Error),
}

fn load(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(&cli.config).map_err(|e| {
        ConfigError(format!(
            "`config`: cannot read {}: {e}",
            cli.config.display()
        ))
    })?;
    config::parse(&text)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let started = Instant::now();
    let mut cfg = load(cli).map_err(Failure::Config)?;
    let job = cfg.resolve(cli.command).map_err(Failure::Config)?;
    cfg.command = Some(cli.command);
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Config(ConfigError(
                "`threads`: must be positive".into(),
            )));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Compute(e.into()))?;
    }
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("rjacobi-out"));
    std::fs::create_dir_all(&dir)
        .map_err(|e| Failure::Compute(anyhow::anyhow!("cannot create {}: {e}", dir.display())))?;
    let outputs = run::execute(&job, cfg.seed, &dir).map_err(Failure::Compute)?;
    let manifest = Manifest {
        command: cli.command,
        seed: cfg.seed,
        version: rjacobi::VERSION,
        outputs: &outputs,
        wall_time_seconds: started.elapsed().as_secs_f64(),
        config: &cfg,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Compute(e.into()))?;
    std::fs::write(dir.join("manifest.json"), text + "\n")
        .map_err(|e| Failure::Compute(anyhow::anyhow!("cannot write manifest: {e}")))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Compute(e)) => {
            eprintln!("error: {}: {e:#}", cli.command);
            ExitCode::from(1)
        }
    }
}
