use thiserror::Error;

/// Failures raised by the numerical pipelines.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not symplectic (defect {defect:.3e})")]
    NotSymplectic { defect: f64 },

    #[error("restriction of the symplectic form is degenerate (relative det {det:.3e})")]
    DegenerateSubspace { det: f64 },

    #[error("point outside the certified domain (|x| = {norm:.6}, radius {radius:.6})")]
    OutsideDomain { norm: f64, radius: f64 },

    #[error("singular jacobian")]
    SingularJacobian,

    #[error("newton correction diverged at node {node} (t = {t}, residual {residual:.3e})")]
    NewtonDivergence { node: usize, t: f64, residual: f64 },

    #[error("continuation step {step} exceeds cap {cap}")]
    StepTooLarge { step: f64, cap: f64 },

    #[error("beyond local regime: {0}")]
    BeyondLocalRegime(String),

    #[error("quadrature under-resolved: estimate {estimate:.3e} for value {value:.6e}")]
    UnderResolved { value: f64, estimate: f64 },

    #[error("radial oracle refused: {0}")]
    OracleRefused(String),

    #[error("bisection did not converge: {0}")]
    BisectionFailed(String),

    #[error("multiplier is not positive (min {min:.3e})")]
    NonPositiveMultiplier { min: f64 },

    #[error("multiplier is not fiber-invariant (defect {defect:.3e})")]
    NotInvariant { defect: f64 },

    #[error("orders below {order} are not reduced (defect {defect:.3e})")]
    NotReduced { order: usize, defect: f64 },

    #[error("flow integration failed: {0}")]
    FlowFailure(String),

    #[error("no closed orbit found: {0}")]
    NoOrbitFound(String),

    #[error("pinch violated: radial range [{min:.4}, {max:.4}] not inside [{delta}, {big_delta}]")]
    PinchViolated { min: f64, max: f64, delta: f64, big_delta: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
