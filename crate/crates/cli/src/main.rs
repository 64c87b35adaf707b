//! Pose refinement pipeline CLI.
//!
//! Subcommands: `generate` synthetic datasets, `train` a refiner,
//! `refine` a pose file with a checkpoint, `eval` predictions against
//! ground truth, and `inspect` checkpoints or pose files.

mod cmd;
mod error;

use clap::{Parser, Subcommand};
use error::CliError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "kinepose", version, about = "Keypoint sequence refinement pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic clean/noisy pose sequence pairs.
    Generate {
        /// Spec file with `key = value` lines (defaults apply if omitted).
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Output directory for pose files and the manifest.
        #[arg(long)]
        out: PathBuf,
        /// Override spec values, e.g. --set noise_sigma=0.05 (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Train a refiner on a generated dataset directory.
    Train {
        /// Directory produced by `generate`.
        #[arg(long)]
        data: PathBuf,
        /// Output directory for checkpoint, history, and manifest.
        #[arg(long)]
        out: PathBuf,
        /// Training config file with dotted `key = value` lines.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override config values, e.g. --set train.total_epochs=20.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Refine a pose file with a trained checkpoint.
    Refine {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Stride between overlapping windows (1 = densest averaging).
        #[arg(long, default_value_t = 1)]
        stride: usize,
    },
    /// Evaluate a prediction file against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
    /// Summarize a checkpoint or pose file.
    Inspect {
        /// Path to a `.pose` or `.ckpt` file (detected by header).
        path: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { spec, out, overrides } => cmd::generate::run(spec, out, overrides),
        Command::Train { data, out, config, overrides } => {
            cmd::train::run(data, out, config, overrides)
        }
        Command::Refine { checkpoint, input, output, stride } => {
            cmd::refine::run(checkpoint, input, output, stride)
        }
        Command::Eval { pred, gt } => cmd::eval::run(pred, gt),
        Command::Inspect { path } => cmd::inspect::run(path),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
