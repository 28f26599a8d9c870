//! Subcommand implementations for the `groundkit` binary.

pub mod args;
pub mod commands;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] groundkit::Error),
}

impl CliError {
    /// 1 for usage errors, 2 for data errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;
