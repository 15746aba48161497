use thiserror::Error;

use crate::svm::SvmBinaryModel;

/// Errors produced anywhere in the library.
///
/// Variants are grouped by the CLI exit code they map to, see [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty input")]
    EmptyInput,

    #[error("invalid data: {0}")]
    Data(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("degenerate class {class}: {msg}")]
    DegenerateClass { class: usize, msg: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("SMO did not converge within {iterations} iterations")]
    NotConverged {
        iterations: usize,
        /// Model built from the best iterate reached before the cap.
        model: Box<SvmBinaryModel>,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code used by the CLI: 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) => 1,
            Error::Parse { .. }
            | Error::EmptyInput
            | Error::Data(_)
            | Error::DimensionMismatch { .. }
            | Error::Io { .. }
            | Error::Serde(_) => 2,
            Error::DegenerateGeometry(_)
            | Error::DegenerateClass { .. }
            | Error::Numerical(_)
            | Error::NotConverged { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
