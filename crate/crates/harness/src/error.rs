use std::path::Path;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}:{line}:{column}: {message}")]
    Parse { path: String, line: usize, column: usize, message: String },

    #[error("invalid `{field}`: {constraint}")]
    Validation { field: String, constraint: String },

    #[error(transparent)]
    Core(#[from] porflow_core::Error),

    #[error(transparent)]
    Picnn(#[from] porflow_picnn::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("png: {0}")]
    Png(#[from] png::EncodingError),

    #[error("{path}: {reason}")]
    Format { path: String, reason: String },
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.display().to_string(), source }
    }

    pub fn format(path: &Path, reason: impl Into<String>) -> Self {
        HarnessError::Format { path: path.display().to_string(), reason: reason.into() }
    }

    fn is_nonconvergence(e: &porflow_core::Error) -> bool {
        match e {
            porflow_core::Error::NonConvergence { .. } => true,
            porflow_core::Error::StepFailed { source, .. } => Self::is_nonconvergence(source),
            _ => false,
        }
    }

    /// 2 configuration, 3 solver non-convergence, 4 training divergence, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Parse { .. } | HarnessError::Validation { .. } => 2,
            HarnessError::Core(e) | HarnessError::Picnn(porflow_picnn::Error::Core(e)) if Self::is_nonconvergence(e) => 3,
            HarnessError::Picnn(porflow_picnn::Error::DivergedTraining { .. }) => 4,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Parse { .. } => "parse",
            HarnessError::Validation { .. } => "validation",
            HarnessError::Core(_) => "simulation",
            HarnessError::Picnn(_) => "training",
            HarnessError::Io { .. } => "io",
            HarnessError::Csv(_) => "csv",
            HarnessError::Png(_) => "png",
            HarnessError::Format { .. } => "format",
        }
    }

    /// Single-line JSON description for machine consumption.
    pub fn record(&self) -> String {
        #[derive(Serialize)]
        struct Record<'a> {
            error: &'a str,
            exit_code: i32,
            message: String,
        }
        serde_json::to_string(&Record { error: self.kind(), exit_code: self.exit_code(), message: self.to_string() })
            .expect("error record serialises")
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
