use thiserror::Error;

/// Every failure the library reports.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A configuration value is invalid.
    #[error("config error: {0}")]
    Config(String),
    /// The operation is not valid in the current state.
    #[error("state error: {0}")]
    State(String),
    #[error("point {index} duplicates experimental design entry {existing}")]
    DuplicatePoint { index: usize, existing: usize },
    /// The limit-state evaluator could not be run.
    #[error("evaluator error: {0}")]
    Evaluator(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub(crate) fn state(msg: impl Into<String>) -> Error {
    Error::State(msg.into())
}
