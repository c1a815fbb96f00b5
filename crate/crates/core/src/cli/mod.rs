//! Command-line interface.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration
//! error. Worker threads: `--workers` flag, else `HSC_WORKERS`, else the
//! config's `workers`, else one per core.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::HscError;
use crate::solver::Mode;

pub use config::{load_source, parse_axis, resolve_network, Axis, DatasetSource, PreprocessSection, Resolved, RunConfig, SweepSection, WhiteningKind};

pub const WORKERS_ENV: &str = "HSC_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "hsc", version, about = "Hierarchical convolutional sparse coding: Hi-La and sparse predictive coding")]
pub struct Cli {
    /// Worker threads (overrides HSC_WORKERS and the config).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Run configuration supplying the dataset, preprocessing and inference settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `HSD1` dataset cache to use instead of the config's dataset (test split role).
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn dictionaries; writes checkpoints, learning curves and a cost report.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Run inference with a checkpoint; writes per-image costs and an aggregate report.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "spc")]
        mode: Mode,
        #[arg(long)]
        output: PathBuf,
        /// Stability threshold (default: config value, else 5e-4).
        #[arg(long)]
        t_stab: Option<f64>,
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// Train and evaluate both modes over a λ1 x λ2 grid and several seeds.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Reuse finished runs from a previous invocation.
        #[arg(long)]
        resume: bool,
    },
    /// Back-project dictionaries to pixel space and write one mosaic per layer.
    ExportRf {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "spc")]
        mode: Mode,
        #[arg(long)]
        output: PathBuf,
        /// Drop the most frequently active atom from every mosaic.
        #[arg(long)]
        exclude_top: bool,
        #[arg(long, default_value = "png")]
        format: String,
        #[arg(long)]
        t_stab: Option<f64>,
    },
    /// Draw a synthetic dataset from random dictionaries of the config's architecture.
    GenSynthetic {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 1000)]
        n_train: usize,
        #[arg(long, default_value_t = 200)]
        n_test: usize,
        #[arg(long, default_value_t = 3)]
        active: usize,
        #[arg(long, default_value_t = 0.0)]
        noise_std: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Load and preprocess the config's dataset into `HSD1` caches.
    Preprocess {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

/// A failed command with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn usage(e: impl std::fmt::Display) -> Self {
        Failure { code: 2, message: e.to_string() }
    }

    pub fn runtime(e: impl std::fmt::Display) -> Self {
        Failure { code: 1, message: e.to_string() }
    }
}

/// Errors before any compute: bad input files and configs are usage errors.
pub(crate) fn input_error(e: HscError) -> Failure {
    Failure::usage(e)
}

fn worker_count(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| Failure::usage(format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = worker_count(cli.workers).and_then(|workers| commands::dispatch(cli.command, workers));
    match result {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
