use thiserror::Error;

use crate::tensorfile::FormatError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("{0}: empty input")]
    Empty(&'static str),

    #[error("{op}: non-finite value at element {index}")]
    NonFinite { op: &'static str, index: usize },

    #[error("attention matrix row {row} sums to {sum}, expected 1")]
    NotStochastic { row: usize, sum: f32 },

    #[error("attention matrix entry ({row}, {col}) = {value} is outside [0, 1]")]
    OutOfRange { row: usize, col: usize, value: f32 },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("index {index} out of range for {len} tokens")]
    Index { index: usize, len: usize },

    #[error(transparent)]
    Format(#[from] FormatError),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
