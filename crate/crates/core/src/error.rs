use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("missing file: {0}")]
    MissingFile(String),
    #[error("schema violation at `{field}`: {message}")]
    SchemaViolation { field: String, message: String },
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("malformed PLY: {0}")]
    Ply(String),
}

impl SceneError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SceneError::Io { path: path.into(), source }
    }

    pub(crate) fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        SceneError::SchemaViolation { field: field.into(), message: message.into() }
    }
}

/// Failure talking to a model backend (vision-chat or segmentation).
#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("BackendUnavailable after {attempts} attempt(s): {cause}")]
    Unavailable { attempts: u32, cause: String },
    #[error("BackendError: status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("BackendError: malformed response: {0}")]
    Protocol(String),
}
