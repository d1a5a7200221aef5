use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the DFR pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("point {point:?} lies outside the domain [0, pi]^{dim}")]
    Domain { point: Vec<f64>, dim: usize },

    #[error("invalid mode index {k:?} for family {family}")]
    InvalidMode { family: &'static str, k: Vec<u32> },

    #[error("grid with {points} points on axis {axis} cannot resolve wavenumber {wavenumber}")]
    UnderResolved {
        axis: usize,
        points: usize,
        wavenumber: u32,
    },

    #[error("invalid material: {0}")]
    Material(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("training stalled at iteration {iteration}: learning rate {lr:e} at floor")]
    Stall { iteration: usize, lr: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("bad file format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
