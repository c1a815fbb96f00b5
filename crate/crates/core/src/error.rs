use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the sparse coding engine.
#[derive(Debug, Error)]
pub enum HscError {
    #[error("dimension mismatch on {axis}: expected {expected}, got {got}")]
    Dimension {
        axis: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: String, reason: String },

    #[error("numerical failure in layer {layer} at iteration {iteration}: {reason}")]
    Numerical {
        layer: usize,
        iteration: usize,
        reason: String,
    },

    #[error("largest-eigenvalue solver did not converge after {iterations} operator applications (last estimate {rayleigh})")]
    NoConvergence { iterations: usize, rayleigh: f64 },

    #[error("dense expansion needs {required} entries, limit is {limit}")]
    TooLarge { required: usize, limit: usize },

    #[error("invalid network spec: {0}")]
    Spec(String),

    #[error("format error at byte offset {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("preprocessing step `{0}` was already applied to this dataset")]
    AlreadyApplied(String),

    #[error("dataset is empty: {0}")]
    EmptyDataset(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = HscError> = std::result::Result<T, E>;

impl HscError {
    pub(crate) fn dim(axis: impl Into<String>, expected: usize, got: usize) -> Self {
        HscError::Dimension {
            axis: axis.into(),
            expected,
            got,
        }
    }

    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        HscError::Parameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HscError::Io {
            path: path.into(),
            source,
        }
    }
}
