use thiserror::Error;

/// Errors raised by the simulator and its solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("KL divergence undefined: q[{index}] > 0 but p[{index}] = 0")]
    UndefinedDivergence { index: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("user {0} has no remaining nonces")]
    UserExhausted(usize),

    #[error("all nonce sequences are exhausted")]
    MergeComplete,

    #[error("no nonce sequences given")]
    EmptyInput,

    #[error("invalid nonce sequence for user {user_id}: {reason}")]
    InvalidSequence { user_id: usize, reason: String },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("total nonce length is zero")]
    ZeroTotalDemand,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no miners: the active user set is empty")]
    NoMiners,

    #[error("no active miners remain (system crash) at block {block}")]
    SystemCrash { block: usize },

    #[error("csv: {0}")]
    Csv(String),

    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Csv(err.to_string())
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Csv(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
