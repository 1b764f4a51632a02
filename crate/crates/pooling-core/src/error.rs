use alloc::string::String;
use core::fmt;

/// Error taxonomy shared by constructors, solvers, and the engine.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Malformed input: dimensionality mismatch, out-of-range type values,
    /// non-contiguous ids, missing or decreasing timestamps.
    InvalidArgument(String),
    /// A component broke an internal contract, e.g. a policy returned a job
    /// that is not available.
    ContractViolation(String),
    /// A numeric routine failed to converge. Carries the best primal/dual
    /// objective pair seen so the caller can judge how far apart they are.
    NumericFailure {
        message: String,
        primal: f64,
        dual: f64,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::ContractViolation(msg) => write!(f, "contract violation: {msg}"),
            Error::NumericFailure {
                message,
                primal,
                dual,
            } => write!(
                f,
                "numeric failure: {message} (best primal {primal}, best dual {dual})"
            ),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
