use alloc::string::String;
use core::fmt;

/// Errors shared across the toolkit.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Shape of an input does not match what the operation requires.
    Dimension(String),
    /// Scalar argument outside its admissible range (e.g. T <= 0).
    Domain(String),
    /// Iterative numeric routine failed to converge.
    NonConvergence(String),
    /// A certificate precondition or LMI cannot be satisfied.
    Infeasible(String),
    /// Matrix inversion or linear solve hit a (numerically) singular system.
    Singular(String),
    /// Simulation produced a non-finite state.
    Divergence(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension(m) => write!(f, "dimension error: {m}"),
            Error::Domain(m) => write!(f, "domain error: {m}"),
            Error::NonConvergence(m) => write!(f, "numeric error: {m}"),
            Error::Infeasible(m) => write!(f, "infeasible: {m}"),
            Error::Singular(m) => write!(f, "singular system: {m}"),
            Error::Divergence(m) => write!(f, "divergence: {m}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
