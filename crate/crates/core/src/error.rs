use thiserror::Error;

/// Errors raised across modeling, analysis, synthesis and benchmarking.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("degenerate velocity: slip-angle denominator {0:e} is too close to zero")]
    DegenerateVelocity(f64),
    #[error("singular mass matrix (determinant {0:e})")]
    SingularMassMatrix(f64),
    #[error("eigenvalue at the origin has no damping ratio")]
    ZeroEigenvalue,
    #[error("system matrix is not Hurwitz (max real part {0:e})")]
    UnstableSystem(f64),
    #[error("H2 norm requires zero feedthrough from the disturbance")]
    NonzeroFeedthrough,
    #[error("Lyapunov/Sylvester operator is singular")]
    SingularSylvester,
    #[error("matrix is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("cone inner angle must lie in (0, pi), got {0}")]
    InvalidAngle(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("problem is infeasible: {0}")]
    Infeasible(String),
    #[error("iteration limit reached")]
    MaxIter,
    #[error("numerical failure: {0}")]
    NumericFailure(String),
    #[error("certification failed: {0}")]
    CertificationFailed(String),
    #[error("simulation blew up at t = {t:.3} s: {reason}")]
    NumericBlowup { t: f64, reason: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
