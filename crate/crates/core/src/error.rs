use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid footprint: length {length} and width {width} must satisfy length >= width > 0")]
    InvalidFootprint { length: f64, width: f64 },

    #[error("circle count must be at least 1")]
    ZeroCircles,

    #[error("grid needs at least 2 samples per axis, got {0}")]
    GridTooSmall(usize),

    #[error("invalid {field}: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("serialization: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { field, reason: reason.into() }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
