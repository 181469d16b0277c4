use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} has length {actual}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid binary value {value} in {what}; units take values 0 or 1")]
    NotBinary { what: &'static str, value: u8 },

    #[error("model with {units} units is too large for exact inference (limit {limit})")]
    TooLargeForExactInference { units: usize, limit: usize },

    #[error("model does not have the EPR layout: expected 4 visible units, found {0}")]
    NotEprLayout(usize),

    #[error("insufficient data: no trials for setting pair(s) {}", .0.join(", "))]
    InsufficientData(Vec<String>),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("invalid trainer configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
