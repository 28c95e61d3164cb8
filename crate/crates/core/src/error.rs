use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("ingest failed: {0}")]
    Ingest(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },

    #[error("training diverged at step {step} (loss = {loss})")]
    Diverged { step: u64, loss: f64 },

    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format { path: path.into(), msg: msg.into() }
    }

    /// Errors caused by bad inputs or configuration rather than a bug or
    /// an environment failure.
    pub fn is_user_error(&self) -> bool {
        matches!(self, Error::Ingest(_) | Error::Config(_) | Error::Invalid(_) | Error::Format { .. } | Error::Json(_))
            || matches!(self, Error::Io(e) | Error::Read { source: e, .. } if e.kind() == std::io::ErrorKind::NotFound)
    }
}

/// `fs::read_to_string` with the path in the error.
pub(crate) fn read_text(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Read { path: path.to_path_buf(), source })
}

/// `fs::read` with the path in the error.
pub(crate) fn read_bytes(path: &std::path::Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::Read { path: path.to_path_buf(), source })
}
