//! Experiment configs, sweep runner and result files for the `stecho` tool.

pub mod config;
pub mod experiment;
pub mod output;
pub mod plots;
pub mod runner;
pub mod svg;
pub mod units;

use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("{context}: {source}")]
    Point { context: String, source: stecho::Error },
    #[error(transparent)]
    Core(#[from] stecho::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Csv { path: PathBuf, message: String },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn csv(path: &Path, e: csv::Error) -> Self {
        CliError::Csv { path: path.to_path_buf(), message: e.to_string() }
    }

    /// Process exit code: 1 for invalid input, 3 for a fit that did not
    /// converge, 2 for any other failure.
    pub fn exit_code(&self) -> i32 {
        let core = match self {
            CliError::Config { .. } | CliError::Input(_) | CliError::Csv { .. } => return 1,
            CliError::Point { source, .. } | CliError::Core(source) => source,
            CliError::Io { .. } | CliError::Runtime(_) => return 2,
        };
        match core {
            stecho::Error::FitDidNotConverge(_) => 3,
            stecho::Error::Syntax { .. }
            | stecho::Error::Validation(_)
            | stecho::Error::UnknownPhase { .. }
            | stecho::Error::UnknownBuiltin(_)
            | stecho::Error::InvalidDuration(_)
            | stecho::Error::InvalidSample(_)
            | stecho::Error::InvalidGradient(_)
            | stecho::Error::NoAcquisition
            | stecho::Error::DimensionTooLarge { .. }
            | stecho::Error::InvalidSpinSystem(_)
            | stecho::Error::EchoWindowsOverlap { .. } => 1,
            stecho::Error::DegenerateDesign(_) | stecho::Error::InsufficientData(_) => 2,
        }
    }
}
