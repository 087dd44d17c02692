use thiserror::Error;

/// Everything that can go wrong in the offline/online pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric positive definite")]
    NotSpd,
    #[error("matrix is singular: {0}")]
    Singular(String),
    #[error("saddle-point system is singular: {0}")]
    SingularSystem(String),
    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("parameter {mu:?} lies outside the parameter domain")]
    OutOfDomain { mu: Vec<f64> },
    #[error("invalid parameter domain: {0}")]
    InvalidDomain(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("inf-sup stability lost: {0}")]
    StabilityLoss(String),
    #[error("surrogate constants need a nonempty training set")]
    EmptyTrainingSet,

    #[error("reduced saddle system is singular (unstable RB pair)")]
    SingularReducedSystem,
    #[error("residual norm expansion is negative ({value:.3e}); offline data corrupted")]
    NegativeNormSquare { value: f64 },

    #[error("nonpositive stability constant: {0}")]
    NonpositiveConstant(&'static str),
    #[error("best-approximation constraint is infeasible (g_N not in range of B_N)")]
    InfeasibleConstraint,

    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("artifact error: {0}")]
    Artifact(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
