//! Pipeline stages behind the `aeroguard` binary.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use aeroguard_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("missing {}: run `aeroguard {producer}` first", path.display())]
    Missing { path: PathBuf, producer: &'static str },
    #[error(transparent)]
    Core(#[from] Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    /// 2 configuration, 3 missing or unusable artifact, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Missing { .. } => 3,
            CliError::Core(e) => match e {
                Error::Config(_) | Error::UnknownChannel(_) | Error::Label { .. } => 2,
                Error::Checkpoint(_) | Error::Compatibility(_) | Error::Parse { .. } | Error::Format { .. } => 3,
                Error::Numeric(_) | Error::TrainingFault(_) | Error::DegenerateChannel(_) => 4,
                _ => 1,
            },
        }
    }
}
