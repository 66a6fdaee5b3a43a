use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema mismatch in column `{column}`: {message}")]
    Schema { column: String, message: String },

    #[error("row {row}: {message}")]
    InvalidRow { row: usize, message: String },

    #[error("row {row}: response before minimum (y = {y} < b0 = {b0})")]
    ResponseBeforeMinimum { row: usize, y: f64, b0: f64 },

    #[error("row {row}: response after follow-up cutoff (y = {y} > c0 = {c0})")]
    ResponseAfterCutoff { row: usize, y: f64, c0: f64 },

    #[error("row {row}: nonrespondent (y = c0) recorded with delta = 1")]
    NonrespondentEvent { row: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("duplicate abscissa {0}; aggregate ties before calling")]
    DuplicateAbscissa(f64),

    #[error("insufficient support: {found} unique response times in window, need at least 3")]
    InsufficientSupport { found: usize },

    #[error("outside response-time support at y = {0}")]
    OutsideSupport(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
