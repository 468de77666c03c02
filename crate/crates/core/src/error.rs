//! Error type shared across the crate.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("count mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("non-finite coordinate at point {index}")]
    NonFiniteCoordinate { index: usize },

    #[error("unknown class id {id} at index {index}")]
    UnknownClassId { id: u32, index: usize },

    #[error("{path}: {len} bytes is not a whole number of {record}-byte records")]
    TruncatedFile { path: PathBuf, len: u64, record: u64 },

    #[error("{path}: {len} bytes does not hold {expected} records")]
    CountMismatch {
        path: PathBuf,
        len: u64,
        expected: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("line {line}: malformed entry: {text:?}")]
    MalformedLine { line: usize, text: String },

    #[error("line {line}: duplicate source class {id}")]
    DuplicateSource { line: usize, id: u32 },

    #[error("class map {name:?}: source class {id} has no mapping")]
    IncompleteMap { name: String, id: u32 },

    #[error("label {id} is outside the class map domain")]
    UnmappedClass { id: u32 },

    #[error("no palette entry for class {id}")]
    MissingPaletteEntry { id: u32 },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("missing label file for scan {0}")]
    MissingLabels(PathBuf),

    #[error("selection pool is empty")]
    EmptySelectionPool,

    #[error("empty confidence sample")]
    EmptySample,

    #[error("confidence out of [0,1] at point {index}")]
    BadConfidence { index: usize },

    #[error("probability row {row} is not normalized")]
    BadProbability { row: usize },

    #[error("all points carry the ignore label")]
    AllIgnored,

    #[error("non-finite gradient at index {index}")]
    NonFiniteGradient { index: usize },

    #[error("non-finite parameter at index {index}")]
    NonFiniteParam { index: usize },

    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: u64 },

    #[error("parameter shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("voxel size must be positive, got {0}")]
    NonPositiveVoxel(f64),

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by a bad configuration rather than bad data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::InvalidConfig(_))
    }

    /// True for numeric failures (NaN/Inf reaching the optimizer).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteLoss { .. }
                | Error::NonFiniteGradient { .. }
                | Error::NonFiniteParam { .. }
        )
    }
}
