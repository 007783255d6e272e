use thiserror::Error;

/// Errors produced by the discrimination toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MedError {
    #[error("{quantity} = {value:e} is at or below the linear-independence threshold {threshold:e}")]
    NearLinearDependence {
        quantity: &'static str,
        value: f64,
        threshold: f64,
    },

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("invalid Gram matrix: {0}")]
    InvalidGram(String),

    #[error("invalid POVM: {0}")]
    InvalidPovm(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not unitary (residual {0:e})")]
    NotUnitary(f64),

    #[error("POVM is not stationary (anti-hermitian part of Z has norm {0:e})")]
    NotStationary(f64),

    #[error("‖F² − DGD‖ = {residual:e} exceeds {limit:e}")]
    ResidualTooLarge { residual: f64, limit: f64 },

    #[error("singular Jacobian at t = {t} (condition estimate {cond:e})")]
    SingularJacobian { t: f64, cond: f64 },

    #[error("F lost positivity at t = {t} (min eigenvalue {min_eig:e})")]
    PositivityLost { t: f64, min_eig: f64 },

    #[error("starting state is not a solution at the source Gram matrix (residual {0:e})")]
    NotCertified(f64),

    #[error("stationary root is not real")]
    NotRealRoot,

    #[error("reconstructed matrix is not unitary (residual {0:e})")]
    UnitarityLost(f64),

    #[error("search did not converge (best gradient norm {0:e})")]
    NoConvergence(f64),

    #[error("geometric audit failed: {0}")]
    AuditFailure(String),

    #[error("random generation failed after {0} attempts")]
    GenerationFailed(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, MedError>;
