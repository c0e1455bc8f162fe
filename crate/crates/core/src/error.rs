use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt header or payload: {0}")]
    CorruptHeader(String),
    #[error("no observation timestamp in header or file name: {0}")]
    MissingTimestamp(String),
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("solar disk not found: {0}")]
    DiskNotFound(String),
    #[error("pixel ({x:.2}, {y:.2}) lies outside the solar disk")]
    OffDisk { x: f64, y: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("solver produced a non-finite iterate at iteration {0}")]
    NonFinite(usize),
    #[error("degenerate frame: standard deviation is zero")]
    DegenerateFrame,
    #[error("structure tensor is singular (condition number {0:.3e})")]
    SingularStructureTensor(f64),
    #[error("insufficient samples for class {class}: {count} < {required}")]
    InsufficientSamples {
        class: usize,
        count: usize,
        required: usize,
    },
    #[error("degenerate mixture component {component} in class {class}")]
    DegenerateComponent { class: usize, component: usize },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("flare centroid at peak lies off the disk (track {0})")]
    OffDiskCentroid(u64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
