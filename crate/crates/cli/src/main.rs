//! `ddmd`: learn Koopman operator approximations from trajectory data and
//! evaluate them by one-step error, multi-step forecasting, and spectra.
//!
//! Every command is a pure function of its config file, input files, and
//! seeds; reruns produce byte-identical models and CSVs.

mod commands;
mod config;
mod dataset_io;

use clap::{Parser, Subcommand};
use koopman_core::error::Error;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "ddmd", version, about = "Koopman operator learning: extended DMD and deep DMD")]
struct Cli {
    /// Output directory (overrides the DDMD_OUT_DIR environment variable).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a benchmark system and write trajectory CSVs plus a manifest.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's data seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit a model (deep, extended-DMD sweep, or fixed random dictionary).
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Dataset directory written by `simulate`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Multi-step forecast from a single root time-point of a trajectory.
    Forecast {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Trajectory index; defaults to the first test trajectory.
        #[arg(long)]
        trajectory: Option<usize>,
        /// Root sample index within the trajectory.
        #[arg(long, default_value_t = 0)]
        root: usize,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// lifted | relift
        #[arg(long, default_value = "lifted")]
        mode: String,
    },
    /// Eigenvalues, modes, and eigenfunction weights of a saved model.
    Spectrum {
        #[arg(long)]
        model: PathBuf,
    },
    /// Dictionary basis responses along one observable axis.
    Sweep {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long, default_value_t = 41)]
        points: usize,
        /// Comma-separated sweep center; defaults to the domain-box midpoint
        /// for polynomial dictionaries and the origin otherwise.
        #[arg(long)]
        center: Option<String>,
    },
    /// Run a benchmark suite and emit the results table plus forecast CSVs.
    Benchmark {
        /// pols | glycolysis | swing
        #[arg(long)]
        suite: String,
        /// desk | paper
        #[arg(long, default_value = "desk")]
        scale: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn out_dir(cli_out: &Option<PathBuf>) -> PathBuf {
    cli_out
        .clone()
        .or_else(|| std::env::var_os("DDMD_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Stable exit-code contract: 0 ok, 2 validation, 3 capacity, 4 numerical.
fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_) | Error::NotOscillatory(_) | Error::Parse(_) | Error::Io(_) => 2,
        Error::DictionaryTooLarge { .. } => 3,
        Error::NumericalFailure(_) | Error::SimulationDiverged { .. } => 4,
    }
}

fn main() {
    let cli = Cli::parse();
    let out = out_dir(&cli.out);
    let result = match cli.command {
        Command::Simulate { config, seed } => commands::simulate(&config, seed, &out),
        Command::Train { config, data, seed } => commands::train(&config, &data, seed, &out),
        Command::Forecast {
            model,
            data,
            trajectory,
            root,
            steps,
            mode,
        } => commands::forecast(&model, &data, trajectory, root, steps, &mode, &out),
        Command::Spectrum { model } => commands::spectrum(&model, &out),
        Command::Sweep {
            model,
            dim,
            radius,
            points,
            center,
        } => commands::sweep(&model, dim, radius, points, center.as_deref(), &out),
        Command::Benchmark { suite, scale, seed } => {
            commands::benchmark(&suite, &scale, seed, &out)
        }
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}
