use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Variants are grouped so a front end can map them onto a handful of exit
/// codes via [`Error::category`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {op} got {left:?} and {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error("invalid state: {0}")]
    State(String),

    #[error("no context for task {0}")]
    MissingContext(usize),

    #[error("bad data: {0}")]
    Data(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("analysis error: {0}")]
    Analysis(String),

    #[error("persistence error: {0}")]
    Persistence(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Usage,
    Ingest,
    Numeric,
    Persistence,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> Category {
        match self {
            Error::Config(_) | Error::Protocol(_) | Error::State(_) | Error::MissingContext(_) => {
                Category::Usage
            }
            Error::Parse { .. } | Error::Data(_) => Category::Ingest,
            Error::Dimension { .. }
            | Error::Numeric(_)
            | Error::Degenerate(_)
            | Error::Domain(_)
            | Error::Analysis(_) => Category::Numeric,
            Error::Persistence(_) | Error::Io { .. } => Category::Persistence,
        }
    }
}
