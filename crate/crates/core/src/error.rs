use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
#[non_exhaustive]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated payload: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("{extra} trailing bytes after {what} payload")]
    TrailingBytes { what: &'static str, extra: usize },
    #[error("region/row-count mismatch: {regions} regions but {rows} descriptor rows")]
    RowCountMismatch { regions: usize, rows: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid region {index}: {reason}")]
    InvalidRegion { index: usize, reason: String },
    #[error("manifest line {line}: {message}")]
    MalformedManifest { line: usize, message: String },
    #[error("duplicate image id {id:?} on lines {first_line} and {second_line}")]
    DuplicateId {
        id: String,
        first_line: usize,
        second_line: usize,
    },
    #[error("manifest line {line}: unknown split {value:?} (expected \"train\" or \"test\")")]
    UnknownSplit { line: usize, value: String },
    #[error("label {0:?} has no train entry")]
    LabelWithoutTrain(String),
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("single-class input: {0:?} is the only label")]
    SingleClass(String),
    #[error("class {0:?} is not known to the model")]
    UnknownClass(String),
    #[error("invalid config: {0}")]
    Config(#[from] serde_json::Error),
    #[error("inconsistent model bundle: {0}")]
    InconsistentBundle(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by how the tool was invoked rather than by the data.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::InvalidParameter(_) | Error::Config(_))
    }

    pub fn is_internal(&self) -> bool {
        matches!(self, Error::Internal(_))
    }
}
