use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid kernel spec: {0}")]
    InvalidKernel(String),

    #[error("kernel syntax error at byte {pos}: {msg}")]
    KernelSyntax { pos: usize, msg: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid training set: {0}")]
    InvalidTrainingSet(String),

    #[error("covariance factorization failed for `{spec}` even with jitter {jitter:e}")]
    Conditioning { spec: String, jitter: f64 },

    #[error("hyperparameter fitting failed: {0}")]
    Fit(String),

    #[error("projection domain error: {0}")]
    Projection(String),

    #[error("timestamp {0} is not on a 5-minute boundary")]
    Alignment(String),

    #[error("HRV patch of {size} px around pixel ({px}, {py}) leaves the {width}x{height} raster")]
    Coverage {
        size: usize,
        px: i64,
        py: i64,
        width: usize,
        height: usize,
    },

    #[error("no HRV frame at time index {0}")]
    MissingFrame(i64),

    #[error("empty dataset for system {system_id} over window [{start}, {end})")]
    EmptyDataset { system_id: i64, start: i64, end: i64 },

    #[error("insufficient coverage: {0}")]
    InsufficientCoverage(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// True for failures that originate in the numerics rather than in the
    /// caller's data or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Conditioning { .. } | Error::Fit(_))
    }
}
