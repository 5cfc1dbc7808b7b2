use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported geometry: {0}")]
    UnsupportedGeometry(String),

    /// A statistic was requested on data that cannot support a verdict
    /// (empty sample, censoring above the 1% budget, ...).
    #[error("no verdict: {0}")]
    NoVerdict(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
