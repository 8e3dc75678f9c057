use thiserror::Error;

/// Failure modes shared by every operation in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate prior: {0}")]
    DegeneratePrior(String),

    #[error("target index {target} out of range for dimension {n}")]
    InvalidTarget { target: usize, n: usize },

    #[error("degenerate subspace at target {target}: |<t|phi>| = {overlap}")]
    DegenerateSubspace { target: usize, overlap: f64 },

    #[error("undefined angle at target {target}: parallel weight {weight:e}")]
    UndefinedAngle { target: usize, weight: f64 },

    #[error("singular system: condition estimate {condition:e}")]
    SingularSystem { condition: f64 },

    #[error("degenerate model: factor `{factor}` vanishes")]
    DegenerateModel { factor: String },

    #[error("unbounded reduction: curvature factor is zero, restrict the database instead")]
    UnboundedReduction,

    #[error("nonquadratic regime: fit residual {residual:e} exceeds {limit:e}")]
    NonQuadraticRegime { residual: f64, limit: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

impl Error {
    pub(crate) fn degenerate(factor: impl Into<String>) -> Self {
        Error::DegenerateModel { factor: factor.into() }
    }

    /// Coarse classification used by front ends to pick an exit status.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidDimension(_)
            | Error::InvalidInput(_)
            | Error::DegeneratePrior(_)
            | Error::InvalidTarget { .. }
            | Error::InvalidGrid(_) => ErrorKind::Input,
            Error::DegenerateSubspace { .. }
            | Error::UndefinedAngle { .. }
            | Error::DegenerateModel { .. }
            | Error::UnboundedReduction => ErrorKind::Geometry,
            Error::SingularSystem { .. } | Error::NonQuadraticRegime { .. } => ErrorKind::Numerical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Geometry,
    Numerical,
}

pub type Result<T> = std::result::Result<T, Error>;
