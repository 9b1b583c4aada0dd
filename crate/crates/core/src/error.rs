use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate 6-vector rotation: {0}")]
    DegenerateRotation(&'static str),

    #[error("pixel ({x}, {y}) outside image bounds {width}x{height}")]
    OutOfBounds {
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },

    #[error("point is behind the camera (depth {depth:e})")]
    BehindCamera { depth: f64 },

    #[error("radial inversion did not converge (residual {residual:e} px)")]
    NonConvergent { residual: f64 },

    #[error("rays are parallel")]
    ParallelRays,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("image too small for SSIM window: {width}x{height}")]
    TooSmall { width: usize, height: usize },

    #[error("camera count mismatch: {gt} vs {est}")]
    CountMismatch { gt: usize, est: usize },

    #[error("insufficient geometry: found {found} of {wanted} correspondences")]
    InsufficientGeometry { found: usize, wanted: usize },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
