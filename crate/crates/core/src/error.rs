use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, FusionError>;

/// Broad failure category, used by the command line driver to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("dimension error: {what} ({a} vs {b})")]
    Dimension { what: &'static str, a: usize, b: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("singular innovation block at pixel {pixel}")]
    SingularInnovation { pixel: usize },

    #[error("singular predicted covariance in group {group} at instant {instant}")]
    SingularPredicted { group: usize, instant: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl FusionError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            FusionError::Config(_) => ErrorKind::Config,
            FusionError::SingularInnovation { .. } | FusionError::SingularPredicted { .. } => {
                ErrorKind::Numerical
            }
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FusionError::Io { path: path.into(), source }
    }
}
