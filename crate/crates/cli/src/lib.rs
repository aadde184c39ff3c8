//! The `musefm` command line: scene and dataset generation, classical
//! baselines, training, evaluation sweeps and report tables.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use musefm_core::profile::ProfileName;
use musefm_model::{ModelError, TaskId};
use thiserror::Error;

mod commands;
pub mod grid;
pub mod report;

pub use grid::{parse_ebn0_list, parse_snr_grid};

/// Exit status of a failed command.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, inconsistent configuration or missing inputs; exit code 1.
    #[error("{0}")]
    Invalid(String),
    /// Failure while executing a valid request; exit code 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(_) | ModelError::SequenceOverflow { .. } | ModelError::EmptySplit(_) => CliError::Invalid(e.to_string()),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<musefm_core::Error> for CliError {
    fn from(e: musefm_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "musefm", version, about = "Multi-task wireless foundation model toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// System profile; defaults to the dataset's profile, or toy.
    #[arg(long, value_parser = parse_profile)]
    pub profile: Option<ProfileName>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// key = value file overriding system, model and training defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate scenes and their scene graphs.
    SceneGen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scenarios: Option<usize>,
    },
    /// Generate a full dataset with train/val/test splits.
    DataGen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scenarios: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Evaluate classical baselines on the test split over an SNR grid.
    Baseline {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sweep: Sweep,
        /// Dataset root; generated in memory when absent.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        scenarios: Option<usize>,
    },
    /// Train the model on a stored dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        /// Five comma-separated task weights (CE, precoding, detection, decoding, localization).
        #[arg(long)]
        alpha: Option<String>,
    },
    /// Evaluate a checkpoint on the test split over an SNR grid.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sweep: Sweep,
        #[arg(long)]
        dataset: PathBuf,
        /// Checkpoint directory; a fresh seeded model when absent.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Replace every scene graph with free space.
        #[arg(long)]
        empty_scenes: bool,
    },
    /// Merge result CSVs into one comparison table.
    Report {
        #[command(flatten)]
        common: Common,
        /// Result CSVs written by `baseline` and `eval`.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct Sweep {
    /// ce, det, precoding, decoding, loc or all.
    #[arg(long, default_value = "all")]
    pub task: String,
    /// Inclusive SNR grid in dB, start:stop:step.
    #[arg(long)]
    pub snr: Option<String>,
    /// Comma-separated E_b/N_0 values in dB for decoding.
    #[arg(long)]
    pub ebn0: Option<String>,
}

fn parse_profile(s: &str) -> Result<ProfileName, String> {
    s.parse::<ProfileName>().map_err(|e| e.to_string())
}

impl Sweep {
    pub fn tasks(&self) -> CliResult<Vec<TaskId>> {
        if self.task.eq_ignore_ascii_case("all") {
            return Ok(TaskId::ALL.to_vec());
        }
        self.task
            .split(',')
            .map(|t| t.trim().parse::<TaskId>().map_err(|e| CliError::Invalid(e.to_string())))
            .collect()
    }
}

fn require_out(common: &Common) -> CliResult<&Path> {
    common.out.as_deref().ok_or_else(|| CliError::Invalid("--out is required".into()))
}

/// Parses `argv` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cmd: &Command) -> CliResult<()> {
    match cmd {
        Command::SceneGen { common, scenarios } => commands::scene_gen(common, require_out(common)?, *scenarios),
        Command::DataGen { common, scenarios, samples } => commands::data_gen(common, require_out(common)?, *scenarios, *samples),
        Command::Baseline { common, sweep, dataset, scenarios } => {
            commands::baseline(common, require_out(common)?, sweep, dataset.as_deref(), *scenarios)
        }
        Command::Train { common, dataset, epochs, alpha } => {
            commands::train(common, require_out(common)?, dataset, *epochs, alpha.as_deref())
        }
        Command::Eval { common, sweep, dataset, checkpoint, empty_scenes } => {
            commands::eval(common, require_out(common)?, sweep, dataset, checkpoint.as_deref(), *empty_scenes)
        }
        Command::Report { common, inputs } => report::report(inputs, require_out(common)?),
    }
}
