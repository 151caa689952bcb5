use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("column `{0}` not found")]
    MissingColumn(String),

    #[error("target column `{column}` has a missing value at row {row}")]
    MissingTarget { column: String, row: usize },

    #[error("need at least 2 distinct classes, found {0}")]
    TooFewClasses(usize),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("only one class present")]
    SingleClass,

    #[error("no discriminant direction")]
    NoDiscriminantDirection,

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("unknown synthetic dataset `{0}`")]
    UnknownSpec(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the filesystem rather than by data content.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
