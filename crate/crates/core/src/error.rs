use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rejected input: {0}")]
    Rejected(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dim { expected: usize, got: usize },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("identity check failed: {0}")]
    Identity(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn reject<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Rejected(msg.into()))
}
