use std::path::{Path, PathBuf};

use serde::Serialize;

/// Process exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Success = 0,
    Usage = 1,
    Data = 2,
    Gate = 3,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] sarforge_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Image { path: PathBuf, source: image::ImageError },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Gate(String),
}

pub type Result<T> = std::result::Result<T, RunError>;

/// The JSON object written to stderr on failure.
#[derive(Debug, Serialize)]
pub struct ErrorReport<'a> {
    pub error: &'a str,
    pub message: String,
    pub exit_code: i32,
}

impl RunError {
    pub fn exit_kind(&self) -> ExitKind {
        match self {
            RunError::Usage(_) | RunError::Config(_) => ExitKind::Usage,
            RunError::Gate(_) => ExitKind::Gate,
            _ => ExitKind::Data,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Usage(_) => "usage",
            RunError::Core(e) => e.kind(),
            RunError::Io { .. } => "io",
            RunError::Image { .. } => "image",
            RunError::Format { .. } => "format",
            RunError::Config(_) => "config",
            RunError::Gate(_) => "gate",
        }
    }

    pub fn report(&self) -> ErrorReport<'_> {
        ErrorReport { error: self.kind(), message: self.to_string(), exit_code: self.exit_kind() as i32 }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        RunError::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, message: impl ToString) -> Self {
        RunError::Format { path: path.to_path_buf(), message: message.to_string() }
    }
}
