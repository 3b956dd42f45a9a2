use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Model or measure hypotheses that the analytic machinery requires are not met.
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("solver did not converge after {iterations} iterations (last residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("division-degenerate transform: |m(z)| = {0:e}")]
    DegenerateTransform(f64),

    #[error("singular jacobian: |1 - pq| = {0:e}")]
    SingularJacobian(f64),

    #[error("density at zero vanishes ({0:e})")]
    VanishingDensity(f64),

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("step rejected: unitarity deviation {deviation:e} exceeds {limit:e}")]
    StepRejected { deviation: f64, limit: f64 },

    #[error("particle collision: min gap {gap:e} at t = {t}")]
    Collision { gap: f64, t: f64 },

    #[error("unknown {kind} '{name}' (available: {available})")]
    UnknownStrategy { kind: &'static str, name: String, available: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures caused by bad inputs rather than numerics.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_) | Error::AssumptionViolated(_) | Error::UnknownStrategy { .. }
        )
    }
}
