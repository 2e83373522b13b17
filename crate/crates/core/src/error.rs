use thiserror::Error;

/// Failures surfaced by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("quadrature did not converge: refinement levels differ by {rel_diff:.3e} (tolerance {rel_tol:.1e})")]
    NonConvergedQuadrature { rel_diff: f64, rel_tol: f64 },
    #[error("invalid quadrature order: {0}")]
    InvalidOrder(String),
    #[error("kernel evaluated at coincident points")]
    CoincidentPoints,
    #[error("time parameter must be positive, got {0}")]
    NonPositiveTime(f64),
    #[error("argument outside supported range: {0}")]
    OutOfSupportedRange(String),
    #[error("spectral parameter must satisfy Im eta >= 0, got {0}")]
    InvalidSpectralParameter(String),
    #[error("{} eigenvalue(s) within the counting tolerance of -1: {:?}", .borderline.len(), .borderline)]
    BorderlineEigenvalue { count: usize, borderline: Vec<f64> },
    #[error("eigenvalue tracking lost near kappa = {kappa:.6}; refine the kappa grid")]
    TrackingLost { kappa: f64 },
    #[error("near-singular solve (sigma_min = {sigma_min:.3e}) at eta = {eta}")]
    NearSingularSolve { sigma_min: f64, eta: String },
    #[error("multiplier weight {weight:.3e} at the truncation point exceeds tail tolerance {tol:.1e}")]
    TruncationTooTight { weight: f64, tol: f64 },
    #[error("oscillation underresolved: {nodes_per_period:.2} quadrature nodes per period (need 8)")]
    UnderresolvedOscillation { nodes_per_period: f64 },
    #[error("point pair lies inside the light cone (|x-y| = {separation} <= tau = {tau})")]
    InsideCone { separation: f64, tau: f64 },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
