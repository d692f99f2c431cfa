//! `temposcale`: workload decomposition, two-timescale forecasting, baselines,
//! evaluation and autoscaling simulation from the command line.

mod commands;
mod config;
mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Usage errors exit with 1, data errors with 2.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Core(#[from] temposcale_core::Error),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }

    pub fn data(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) | CliError::Core(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "temposcale", version, about = "Two-timescale workload forecasting and autoscaling simulation")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// History window length H.
    #[arg(long, global = true)]
    pub history: Option<usize>,
    /// Forecast horizon F.
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    /// Training epochs for the forecasting networks.
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// Offset between training windows.
    #[arg(long, global = true)]
    pub stride: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic series.
    Synth(commands::SynthArgs),
    /// Clean, average and resample a raw monitoring export.
    Ingest(commands::IngestArgs),
    /// Split a series into short-term, long-term and residual modes.
    Decompose(commands::DecomposeArgs),
    /// Train a forecasting bundle.
    Train(commands::TrainArgs),
    /// Forecast the next horizon from the end of a series.
    Predict(commands::PredictArgs),
    /// Forecast with the autoregressive or persistence baseline.
    Baseline(commands::BaselineArgs),
    /// Score a forecast against actual values.
    Evaluate(commands::EvaluateArgs),
    /// Compare models across history:future settings.
    Study(commands::StudyArgs),
    /// Replay a query-rate trace through the vertical scaling simulator.
    Simulate(commands::SimulateArgs),
    /// Fit a monotone query-rate to CPU profile.
    ProfileFit(commands::ProfileFitArgs),
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("TEMPOSCALE_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Usage(format!("TEMPOSCALE_THREADS={v:?} is not a positive integer")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match configure_threads().and_then(|_| commands::run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
