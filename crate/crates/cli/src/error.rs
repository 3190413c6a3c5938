use sensor_geometry::GeomError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("scenario error: {0}")]
    Schema(String),

    #[error("{context}: {source}")]
    Numeric { context: String, source: GeomError },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("comparison failed: {0}")]
    ComparisonFailed(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Numeric { .. } => 3,
            CliError::ShapeMismatch(_) | CliError::ComparisonFailed(_) => 4,
            CliError::Io { .. } => 1,
        }
    }

    pub(crate) fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Attach the experiment name to a module error.
pub(crate) trait Context<T> {
    fn context(self, what: &str) -> Result<T>;
}

impl<T> Context<T> for std::result::Result<T, GeomError> {
    fn context(self, what: &str) -> Result<T> {
        self.map_err(|source| CliError::Numeric {
            context: what.to_string(),
            source,
        })
    }
}
