use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid {what}: {reason}")]
    Invalid { what: String, reason: String },

    #[error("non-physical formation volume factor at p = {pressure} psia (1 + c(p - p_ref) = {denominator})")]
    NonPhysicalFvf { pressure: f64, denominator: f64 },

    #[error("invalid well geometry for `{well}`: {reason}")]
    InvalidWellGeometry { well: String, reason: String },

    #[error("dimension mismatch: expected {expected} cells, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("singular Jacobian (zero pivot in column {column})")]
    SingularJacobian { column: usize },

    #[error("Newton did not converge at step {step} after {cuts} step cuts (last scaled residual {residual:.3e})")]
    NonConvergence { step: usize, cuts: usize, residual: f64 },

    #[error("degenerate reference field: max |y| = 0")]
    DegenerateReference,

    #[error("reference is zero at pixel {index}")]
    DivisionByZeroPixel { index: usize },

    #[error("step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("schedule has no controls for step {0}")]
    MissingControls(usize),
}

impl Error {
    pub(crate) fn invalid(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what: what.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
