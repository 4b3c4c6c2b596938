use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("mismatch: {0}")]
    Mismatch(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable tag used in machine-readable CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Format(_) => "format",
            Error::Shape(_) => "shape",
            Error::Data(_) => "data",
            Error::MissingFile(_) => "missing_file",
            Error::Mismatch(_) => "mismatch",
            Error::Degenerate(_) => "degenerate",
            Error::UndefinedCorrelation(_) => "undefined_correlation",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Empty(_) => "empty",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
