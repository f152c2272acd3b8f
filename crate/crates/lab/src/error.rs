use std::path::PathBuf;

use serde::Serialize;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error(transparent)]
    Core(#[from] confound_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {detail}")]
    Parse { path: PathBuf, detail: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{0}: sealed contexts are oracle-only (pass --oracle or set CONFOUND_LAB_ORACLE=1)")]
    OracleLocked(PathBuf),
    #[error("{0}")]
    Csv(#[from] csv::Error),
}

/// Machine-readable error record printed by the CLI on failure.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub error: &'static str,
    pub message: String,
}

impl LabError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, detail: impl ToString) -> Self {
        LabError::Parse {
            path: path.into(),
            detail: detail.to_string(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LabError::Core(_) => "core",
            LabError::Io { .. } => "io",
            LabError::Parse { .. } => "parse",
            LabError::Config(_) => "config",
            LabError::OracleLocked(_) => "oracle-locked",
            LabError::Csv(_) => "csv",
        }
    }

    pub fn report(&self) -> ErrorReport {
        ErrorReport {
            error: self.kind(),
            message: self.to_string(),
        }
    }
}
