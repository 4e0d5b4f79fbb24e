use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] xover_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: invalid JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: invalid CSV: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{0}")]
    Format(String),

    #[error("invalid covariance spec {spec:?}: {reason}")]
    CovSpec { spec: String, reason: String },

    #[error("{0}")]
    Usage(String),

    #[error("verification failed: {failed} of {total} suites did not pass")]
    VerifyFailed { failed: usize, total: usize },
}

impl CliError {
    /// 0 success, 1 validation, 2 computational degeneracy, 3 cap exceeded.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => e.exit_code(),
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Io { .. } => "Io",
            CliError::Json { .. } => "Json",
            CliError::Csv { .. } => "Csv",
            CliError::Format(_) => "Format",
            CliError::CovSpec { .. } => "CovSpec",
            CliError::Usage(_) => "Usage",
            CliError::VerifyFailed { .. } => "VerifyFailed",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}
