use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the stacking toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("odd dimension: {width}x{height} is not a whole number of Bayer cells")]
    OddDimension { width: usize, height: usize },

    #[error("invalid levels: black level {black} must be below white level {white}")]
    InvalidLevels { black: u32, white: u32 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("image too small: {0}")]
    TooSmall(String),

    #[error("singular warp (determinant {0:e})")]
    SingularWarp(f64),

    #[error("registration diverged: {0}")]
    Divergence(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient bursts for lens {lens}: requested {requested}, available {available}")]
    InsufficientBursts {
        lens: String,
        requested: usize,
        available: usize,
    },

    #[error("no items")]
    NoItems,

    #[error("id mismatch: {0}")]
    IdMismatch(String),

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("malformed file {}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },

    #[error("checksum mismatch: {}", .0.display())]
    Checksum(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Codec(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn mismatch(expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
