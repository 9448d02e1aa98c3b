use perfhom_core::Error as CoreError;
use thiserror::Error;

/// Failures of a CLI command, each mapped to an exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{stage}: {source}")]
    Core {
        stage: String,
        #[source]
        source: CoreError,
    },
    /// The run completed but at least one acceptance check failed.
    #[error("acceptance checks failed: {0}")]
    Failed(String),
}

impl CliError {
    /// 2 validation or missing input, 3 numerical failure, 4 acceptance FAIL.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } | Self::Validation(_) | Self::MissingArtifact(_) | Self::Io { .. } => 2,
            Self::Core { source, .. } => match source {
                CoreError::Geometry(_) | CoreError::Invalid(_) | CoreError::GridMismatch(_) => 2,
                _ => 3,
            },
            Self::Failed(_) => 4,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), message: e.to_string() }
    }
}

impl From<CoreError> for CliError {
    fn from(source: CoreError) -> Self {
        Self::Core { stage: "pipeline".into(), source }
    }
}

/// Attaches the pipeline stage to core errors.
pub trait Stage<T> {
    fn stage(self, stage: impl FnOnce() -> String) -> Result<T, CliError>;
}

impl<T> Stage<T> for Result<T, CoreError> {
    fn stage(self, stage: impl FnOnce() -> String) -> Result<T, CliError> {
        self.map_err(|source| CliError::Core { stage: stage(), source })
    }
}
