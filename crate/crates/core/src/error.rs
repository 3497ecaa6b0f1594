use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("post-selection is empty: no amplitude survives one-photon-per-arm projection")]
    EmptyPostselection,

    #[error("coincidence frame is empty")]
    EmptyFrame,

    #[error("underdetermined fit: need at least 3 distinct abscissae, got {0}")]
    UnderdeterminedFit(usize),

    #[error("cannot correct for detector efficiency: {0}")]
    CannotCorrect(String),

    #[error("insufficient data: missing {}", .missing.join(", "))]
    InsufficientData { missing: Vec<String> },

    #[error("no key material: {0}")]
    EmptyKey(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
