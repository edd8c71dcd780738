use std::path::PathBuf;

use crwn::error::Category;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] crwn::Error),
    #[error("invalid value for `{field}`: {message}")]
    Usage { field: String, message: String },
    #[error("missing artifacts in {dir}: {}", names.join(", "))]
    MissingArtifacts { dir: PathBuf, names: Vec<String> },
    #[error("download failed for {url}: {message}")]
    Download { url: String, message: String },
    #[error("checksum mismatch for {file}: expected {expected}, got {actual}")]
    Checksum {
        file: String,
        expected: String,
        actual: String,
    },
    #[error("run directory {0} is locked by another process (remove run.lock if stale)")]
    Locked(PathBuf),
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INGEST: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_PERSISTENCE: i32 = 5;

impl CliError {
    pub fn usage(field: &str, message: impl Into<String>) -> Self {
        CliError::Usage {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e.category() {
                Category::Usage => EXIT_USAGE,
                Category::Ingest => EXIT_INGEST,
                Category::Numeric => EXIT_NUMERIC,
                Category::Persistence => EXIT_PERSISTENCE,
            },
            CliError::Usage { .. } | CliError::Locked(_) => EXIT_USAGE,
            CliError::Download { .. } | CliError::Checksum { .. } => EXIT_INGEST,
            CliError::MissingArtifacts { .. } => EXIT_PERSISTENCE,
        }
    }
}
