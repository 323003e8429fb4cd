use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] porflow_core::Error),

    #[error("shape mismatch: expected {expected}, got {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("control {value} of well `{well}` outside normalisation bounds [{lo}, {hi}]")]
    OutOfRangeControl { well: String, value: f64, lo: f64, hi: f64 },

    #[error("no observed WBP for producer `{well}` at step {step}")]
    MissingObservation { step: usize, well: String },

    #[error("training diverged at step {step}, epoch {epoch} (loss {loss})")]
    DivergedTraining { step: usize, epoch: usize, loss: f64 },

    #[error("no checkpoint for step {0}")]
    MissingCheckpoint(usize),

    #[error("network spec hash mismatch: expected {expected}, found {found}")]
    SpecHashMismatch { expected: String, found: String },

    #[error("corrupt checkpoint {path}: {reason}")]
    CorruptCheckpoint { path: String, reason: String },

    #[error("checkpoint format version {found} not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("invalid {what}: {reason}")]
    Invalid { what: String, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid { what: what.into(), reason: reason.into() }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io { path: path.display().to_string(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
