//! Command-line front end: argument parsing, run configuration, execution
//! and artifact writing for the `spinphase` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod config;
pub mod output;
pub mod run;

use thiserror::Error;

/// Failures surfaced by the binary, each with a stable exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("numerical failure: {0}")]
    Numerical(spinphase::error::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Io(_) => 4,
            CliError::Numerical(_) => 5,
        }
    }
}

impl From<spinphase::error::Error> for CliError {
    fn from(e: spinphase::error::Error) -> Self {
        use spinphase::error::Error;
        match e {
            Error::Config(msg) => CliError::Config(msg),
            Error::Io(msg) => CliError::Io(msg),
            other => CliError::Numerical(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
