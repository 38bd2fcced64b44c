use std::path::PathBuf;

/// Failures while reading or writing files, or running a command.
#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// The file exists but its contents do not follow the expected layout.
    #[error("{path}: invalid {field}: {detail}")]
    Format {
        path: PathBuf,
        field: String,
        detail: String,
    },
    /// A flag combination or argument that cannot be satisfied.
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] betree_core::Error),
    #[error(transparent)]
    Training(Box<betree_core::trainer::TrainError>),
}

pub type Result<T, E = IoError> = std::result::Result<T, E>;

impl IoError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, field: impl Into<String>, detail: impl Into<String>) -> Self {
        IoError::Format {
            path: path.into(),
            field: field.into(),
            detail: detail.into(),
        }
    }

    /// True for errors caused by how the program was invoked rather than by data.
    pub fn is_usage(&self) -> bool {
        matches!(self, IoError::Usage(_) | IoError::Core(betree_core::Error::Usage(_)))
    }
}
