//! Command line driver for the scattering and shape-uncertainty experiments.
//!
//! `fosb-em <experiment> --config <path> [--out <dir>] [--workers N] [--seed S] [--check]`

pub mod config;
pub mod experiments;
pub mod output;

use std::path::PathBuf;
use std::time::Instant;

use clap::Parser;

pub use config::{parse_config, parse_config_str, ConfigError, Experiment, ExperimentConfig};
pub use experiments::{execute, Results, RunError, Verdict};
pub use fosb;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_CHECK: i32 = 4;

#[derive(Parser, Debug, Clone)]
#[command(name = "fosb-em", version, about = "Scattering and shape-uncertainty experiments")]
pub struct Cli {
    /// sphere-convergence, kite-foa, kite-uq, fichera-uq or custom.
    #[arg(value_parser = parse_experiment)]
    pub experiment: Experiment,
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `out` in the configuration.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to the number of available cores.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Overrides `seed` in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Exit with status 4 when a check fails.
    #[arg(long)]
    pub check: bool,
}

fn parse_experiment(s: &str) -> Result<Experiment, String> {
    s.parse()
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("run failed at stage {0}")]
    Run(#[from] RunError),
    #[error("{} check(s) failed", .0.len())]
    Check(Vec<Verdict>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Run(_) => EXIT_SOLVER,
            CliError::Check(_) => EXIT_CHECK,
        }
    }
}

#[derive(Debug)]
pub struct Outcome {
    pub config: ExperimentConfig,
    pub verdicts: Vec<Verdict>,
    pub files: Vec<PathBuf>,
}

/// Loads the configuration and applies the command line overrides.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = parse_config(&cli.config)?;
    if cfg.experiment != cli.experiment {
        return Err(ConfigError::Invalid(format!(
            "experiment: command line asks for {} but {} sets {}",
            cli.experiment,
            cli.config.display(),
            cfg.experiment
        )));
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// Pool size: `requested`, or the available cores.
pub fn worker_count(requested: Option<usize>) -> Result<usize, ConfigError> {
    match requested {
        Some(0) => Err(ConfigError::Invalid("workers must be at least 1".into())),
        Some(n) => Ok(n),
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Runs `cfg` on a pool of `workers` threads and writes its outputs.
pub fn run_config(cfg: &ExperimentConfig, workers: usize) -> Result<Outcome, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| RunError { stage: "worker pool", message: e.to_string() })?;
    // Dense kernels pick their own threads; pin them to the pool for reproducibility.
    faer::set_global_parallelism(if workers == 1 { faer::Par::Seq } else { faer::Par::rayon(workers) });
    experiments::prepare_out_dir(&cfg.out)?;
    let start = Instant::now();
    let results = pool.install(|| execute(cfg))?;
    let verdicts = results.verdicts();
    let files = output::write_outputs(cfg, &results, &verdicts, start.elapsed().as_secs_f64(), &cfg.out)?;
    Ok(Outcome { config: cfg.clone(), verdicts, files })
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let cfg = resolve_config(cli)?;
    let workers = worker_count(cli.workers)?;
    let outcome = run_config(&cfg, workers)?;
    if cli.check {
        let failed: Vec<Verdict> = outcome.verdicts.iter().filter(|v| !v.pass).cloned().collect();
        if !failed.is_empty() {
            return Err(CliError::Check(failed));
        }
    }
    Ok(outcome)
}
