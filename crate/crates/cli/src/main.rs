mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Stereo-vision gait analytics on simulated or recorded walks.
#[derive(Debug, Parser)]
#[command(name = "gaitvision", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Seed for every random draw of the command.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Print the effective config and exit.
    #[arg(long)]
    pub print_config: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a walk and write its observation log and ground truth.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Write a labelled identification dataset of persona walks instead.
        #[arg(long)]
        ident_dataset: bool,
    },
    /// Turn an observation log into a gait report.
    Process {
        #[command(flatten)]
        common: Common,
        /// Observation log directory.
        #[arg(long)]
        log: PathBuf,
        /// Calibration JSON (overrides the config file).
        #[arg(long)]
        calib: Option<PathBuf>,
        /// Ground-truth report directory; adds an accuracy table.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Long-walk drift study.
    Drift {
        #[command(flatten)]
        common: Common,
    },
    /// Cross-validated participant identification.
    Identify {
        #[command(flatten)]
        common: Common,
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Permute labels across cycles first (chance baseline).
        #[arg(long)]
        shuffle_labels: bool,
        /// Also train on all cycles and write a checkpoint.
        #[arg(long)]
        save_model: bool,
    },
    /// Reprojection audit of a calibration.
    CalibCheck {
        #[command(flatten)]
        common: Common,
        /// Calibration JSON (overrides the config file).
        #[arg(long)]
        calib: Option<PathBuf>,
        /// Corner CSV; a synthetic checkerboard is generated when absent.
        #[arg(long)]
        fixture: Option<PathBuf>,
    },
    /// Render a marker image.
    RenderMarker {
        #[command(flatten)]
        common: Common,
    },
    /// Locate the marker center in an image.
    DetectMarker {
        #[command(flatten)]
        common: Common,
        /// Greyscale PGM image.
        #[arg(long)]
        image: PathBuf,
    },
}

/// Failure class; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad input, config or arguments.
    Invalid(anyhow::Error),
    Internal(anyhow::Error),
}

pub trait Classify<T> {
    fn invalid(self) -> Result<T, Failure>;
    fn internal(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn invalid(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Invalid(e.into()))
    }

    fn internal(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Internal(e.into()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = std::panic::catch_unwind(|| commands::run(cli.command));
    match result {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(Failure::Invalid(e))) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Ok(Err(Failure::Internal(e))) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(1)
        }
        Err(_) => ExitCode::from(1),
    }
}
