//! Library side of the batch front-end; the binary in `main.rs` is a thin
//! argument parser over these command implementations.

pub mod commands;
pub mod config;

use std::fmt;

/// Command failures carry the process exit code: 2 for configuration and
/// input problems, 3 for evaluation failures, 1 for everything else.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Eval(String),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Eval(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "{msg}"),
            CliError::Eval(msg) => write!(f, "{msg}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}
