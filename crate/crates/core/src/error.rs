use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the library. Each variant maps onto one of the coarse
/// [`ErrorClass`]es used for process exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Structurally invalid input (length mismatch, unsorted data, bad config).
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("step budget of {max_steps} exceeded before the path reached {stop_level}")]
    BudgetExceeded { max_steps: u64, stop_level: f64 },

    #[error("level b_{k} = {level} is never reached by the path")]
    LevelNotReached { k: usize, level: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Io,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Domain(_)
            | Error::Validation(_)
            | Error::Parse { .. }
            | Error::LevelNotReached { .. } => ErrorClass::Validation,
            Error::Io(_) | Error::Json(_) => ErrorClass::Io,
            Error::BudgetExceeded { .. } | Error::Numerical(_) => ErrorClass::Numerical,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
