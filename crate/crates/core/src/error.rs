use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("scene has no splats")]
    EmptyScene,

    #[error("image size mismatch: {a_w}x{a_h} vs {b_w}x{b_h}")]
    SizeMismatch {
        a_w: usize,
        a_h: usize,
        b_w: usize,
        b_h: usize,
    },

    #[error("non-finite value at index {index} ({context})")]
    NonFinite { index: usize, context: String },

    #[error("training diverged in {stage} at iteration {iteration}: loss = {loss}")]
    Diverged {
        stage: String,
        iteration: usize,
        loss: f64,
    },

    #[error("invalid dataset at {path}: {reason}")]
    Dataset { path: PathBuf, reason: String },

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error at {path}: {source}")]
    Codec {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("JSON error at {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad input data, configuration, camera or checkpoint.
    Invalid,
    /// Reading or writing a file failed.
    Io,
    /// The training loss became non-finite.
    Diverged,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::Codec { source, .. } => match source {
                image::ImageError::IoError(_) | image::ImageError::Encoding(_) => ErrorKind::Io,
                _ => ErrorKind::Invalid,
            },
            Error::Diverged { .. } => ErrorKind::Diverged,
            _ => ErrorKind::Invalid,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}

/// Returns the index of the first non-finite entry, if any.
pub fn first_non_finite(values: &[f64]) -> Option<usize> {
    values.iter().position(|v| !v.is_finite())
}
