//! `ddpqr` command-line tool. Exit codes: 0 success, 2 usage or validation
//! error, 1 runtime failure. Failures print a single `error: ...` line on
//! stderr.

pub mod bp_data;
pub mod commands;
pub mod io;

use std::fmt;

use clap::{Args, Parser, Subcommand};
use ddpqr_core::Error as CoreError;

pub use commands::run;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn runtime(msg: impl fmt::Display) -> Self {
        CliError::Runtime(msg.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::DimensionMismatch { .. }
            | CoreError::EmptyInput(_)
            | CoreError::InvalidDirection(_)
            | CoreError::InvalidArgument(_)
            | CoreError::EmptyWindow { .. }
            | CoreError::Serialization(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ddpqr", version, about = "Bayesian multivariate quantile regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate `(x, y1, y2)` data from the benchmark design.
    Simulate(SimulateArgs),
    /// Run the Gibbs sampler and store posterior draws.
    Fit(FitArgs),
    /// Conditional geometric quantiles from stored draws.
    Quantile(QuantileArgs),
    /// Frequentist median regression (linear or kernel).
    Baseline(BaselineArgs),
    /// Fit the embedded blood-pressure data and report medians by age.
    BpDemo(BpDemoArgs),
    /// Three-method MSE comparison on simulated data.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Error law: t1 or gamma.
    #[arg(long)]
    pub dist: ddpqr_core::simbench::ErrorLaw,
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    pub n: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// CSV with header x,y1,...,yk.
    #[arg(long)]
    pub data: std::path::PathBuf,
    /// JSON with optional `hyper` and `mcmc` objects.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Chain file (JSON lines). A summary goes to `<out>.summary.json`.
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Debug, Args)]
pub struct QuantileArgs {
    /// Chain file written by `fit`.
    #[arg(long)]
    pub chain: std::path::PathBuf,
    /// Fit summary; defaults to `<chain>.summary.json`.
    #[arg(long)]
    pub summary: Option<std::path::PathBuf>,
    /// Direction, comma separated; defaults to the spatial median.
    #[arg(long, allow_hyphen_values = true)]
    pub u: Option<String>,
    /// Covariate values, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
    /// `lo:hi:count`.
    #[arg(long, allow_hyphen_values = true)]
    pub x_grid: Option<String>,
    /// Smoothing half-width: a number, or `auto` for n^(-1/3).
    #[arg(long, default_value = "auto")]
    pub delta: String,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Smoothing points per estimate.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    /// Covariate law for smoothing: kde or normal.
    #[arg(long, default_value = "kde")]
    pub density: String,
    /// Error-quantile evaluator: mc or polar.
    #[arg(long, default_value = "mc")]
    pub evaluator: String,
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub data: std::path::PathBuf,
    /// linear or kernel.
    #[arg(long)]
    pub method: String,
    /// Kernel bandwidth; chosen by leave-one-out CV when absent.
    #[arg(long)]
    pub h: Option<f64>,
    /// CV bandwidth grid, comma separated; defaults to 0.1, 0.2, ..., 2.
    #[arg(long)]
    pub h_grid: Option<String>,
    /// Direction for the kernel method; defaults to the spatial median.
    #[arg(long, allow_hyphen_values = true)]
    pub u: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub x_grid: Option<String>,
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

#[derive(Debug, Args)]
pub struct BpDemoArgs {
    #[arg(long, default_value_t = 20_000)]
    pub draws: usize,
    #[arg(long, default_value_t = 1000)]
    pub burnin: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    /// Smoothing half-width: a number, or `auto` for n^(-1/3).
    #[arg(long, default_value = "auto")]
    pub delta: String,
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated replicate seeds.
    #[arg(long, default_value = "1,2,3,4,5")]
    pub seeds: String,
    #[arg(long, default_value_t = 5000)]
    pub draws: usize,
    #[arg(long, default_value_t = 500)]
    pub burnin: usize,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Comma-separated error laws.
    #[arg(long, default_value = "t1,gamma")]
    pub laws: String,
    /// Score against an error offset of 0 for every law.
    #[arg(long)]
    pub zero_truth: bool,
    #[arg(long, default_value_t = 1_000_000)]
    pub truth_mc: usize,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Record zero for every timing so output depends only on the inputs.
    #[arg(long)]
    pub omit_timing: bool,
    /// Results CSV; metadata goes to `<out>.meta.json`.
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}
