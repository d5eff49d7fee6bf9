use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the simulation and inversion pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("ingestion failed for {path}: {reason}")]
    Ingestion { path: PathBuf, reason: String },

    #[error("shift schedule invalid at frame {frame}: {reason}")]
    Schedule { frame: usize, reason: String },

    #[error("tree layout invalid: {0}")]
    Layout(String),

    #[error("coefficient index {index} out of range (N = {len})")]
    Index { index: usize, len: usize },

    #[error("numerical failure at sweep {sweep}: {reason}")]
    Numerical { sweep: usize, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
