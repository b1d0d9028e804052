//! Error type carrying the process exit code.
//!
//! Exit codes: 0 success, 2 infeasible (certificate or check failed),
//! 3 I/O, 4 validation (bad scenario or arguments).

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    Infeasible(String),
    Io(String),
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Infeasible(_) => 2,
            CliError::Io(_) => 3,
            CliError::Validation(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Infeasible(m) => write!(f, "infeasible: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Validation(m) => write!(f, "validation error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<selftrig::Error> for CliError {
    fn from(e: selftrig::Error) -> Self {
        match e {
            selftrig::Error::Infeasible(m) => CliError::Infeasible(m),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
