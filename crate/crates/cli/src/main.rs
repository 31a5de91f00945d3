//! `soilcarbon` command-line driver.
//!
//! Every subcommand writes its results under `--out` together with a
//! `manifest.json` listing each artifact's SHA-256, the seed and the hash of
//! the configuration file. Progress goes to standard error.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use soilcarbon::priors::Scenario;

/// Exit status for invalid input, configuration or arguments.
const EXIT_VALIDATION: u8 = 2;
/// Exit status for numerical failures (sampler initialisation, degenerate
/// trajectories and similar).
const EXIT_NUMERIC: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "soilcarbon", version, about = "Stochastic soil-carbon pool model: simulation, Bayesian fitting and diagnostics")]
struct Cli {
    /// Worker threads; defaults to the available parallelism. Results do
    /// not depend on this value.
    #[arg(long, global = true, env = "SOILCARBON_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Forward-simulate pool trajectories at the prior means (or the
    /// configured synthetic truth) and write them as a table.
    Simulate(SimulateArgs),
    /// Generate noisy synthetic observations plus the generating truth, and
    /// a configuration that fits them.
    GenSynthetic(GenArgs),
    /// Sample the joint posterior and write draws and a report.
    Fit(FitArgs),
    /// Convergence and spatial-trend diagnostics for existing draws.
    Diagnose(DiagnoseArgs),
    /// Rebuild the summary report from existing draws.
    Summarize(SummarizeArgs),
    /// Fit under prior scenarios N, A and B and compare the results.
    Sensitivity(SensitivityArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Add lognormal process noise with variances at their prior means.
    #[arg(long)]
    stochastic: bool,
    /// Seed for the process noise; defaults to the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Prior scenario whose means are used; defaults to the configured one.
    #[arg(long)]
    scenario: Option<Scenario>,
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Generator seed; defaults to the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

/// Sampler overrides shared by `fit` and `sensitivity`.
#[derive(Debug, Args, Clone)]
struct SamplerArgs {
    /// Number of chains [default: config, else 6].
    #[arg(long)]
    chains: Option<usize>,
    /// Warmup iterations per chain [default: config, else 20000].
    #[arg(long)]
    warmup: Option<usize>,
    /// Post-warmup iterations per chain [default: config, else 50000].
    #[arg(long)]
    iters: Option<usize>,
    /// Keep every `thin`-th iteration [default: config, else 10].
    #[arg(long)]
    thin: Option<usize>,
    /// Sampler seed [default: config, else 1].
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Prior scenario [default: config, else N].
    #[arg(long)]
    scenario: Option<Scenario>,
    #[command(flatten)]
    sampler: SamplerArgs,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    /// Directory holding `draws_chain{k}.csv` files.
    #[arg(long)]
    draws: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Experiment configuration; needed for the trend-surface diagnostic.
    #[arg(long, requires = "trend_month")]
    config: Option<PathBuf>,
    /// Month whose observations feed the trend-surface diagnostic.
    #[arg(long, requires = "config")]
    trend_month: Option<usize>,
}

#[derive(Debug, Args)]
struct SummarizeArgs {
    /// Directory holding `draws_chain{k}.csv` files.
    #[arg(long)]
    draws: PathBuf,
    /// Experiment configuration the draws were fitted to.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Scenario label recorded in the report [default: config].
    #[arg(long)]
    scenario: Option<Scenario>,
}

#[derive(Debug, Args)]
struct SensitivityArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; scenarios go to `N/`, `A/` and `B/` below it.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    sampler: SamplerArgs,
}

/// A failed command, classified for the exit status.
#[derive(Debug)]
enum Failure {
    Validation(String),
    Numeric(String),
}

impl From<soilcarbon::Error> for Failure {
    fn from(e: soilcarbon::Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Numeric(e.to_string())
        }
    }
}

macro_rules! via_crate_error {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                soilcarbon::Error::from(e).into()
            }
        }
    )*};
}

via_crate_error!(
    soilcarbon::io::DataError,
    soilcarbon::inference::InferenceError,
    soilcarbon::diagnostics::DiagnosticsError,
    soilcarbon::model::ModelError,
    soilcarbon::priors::PriorError
);

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_VALIDATION } else { 0 });
        }
    };
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(EXIT_VALIDATION);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    }
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::GenSynthetic(a) => commands::gen_synthetic(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Diagnose(a) => commands::diagnose(&a),
        Command::Summarize(a) => commands::summarize(&a),
        Command::Sensitivity(a) => commands::sensitivity(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(EXIT_NUMERIC)
        }
    }
}
