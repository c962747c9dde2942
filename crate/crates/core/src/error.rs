use thiserror::Error;

/// Errors raised by curve construction, the solvers, the flow steppers and the runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("curve is not immersed: {0}")]
    NotImmersed(String),

    #[error("tension problem is singular: {0}")]
    SingularTension(String),

    #[error("cyclic tridiagonal solve broke down (pivot ratio {pivot_ratio:.3e})")]
    SolverBreakdown { pivot_ratio: f64 },

    #[error("tension lost positivity: min {min:.6e}")]
    PositivityViolation { min: f64 },

    #[error("step rejected: {reason}")]
    StepRejected { reason: String, suggested_dt: Option<f64> },

    #[error("extinction: {0}")]
    Extinction(String),

    #[error("step failed after {halvings} dt halvings (last dt {dt:.3e}): {reason}")]
    HalvingExhausted { halvings: u32, dt: f64, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown preset '{name}' (available: {available})")]
    UnknownPreset { name: String, available: String },

    #[error("decay fit failed: {0}")]
    Fit(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Errors that a smaller time step may cure. The runner halves dt on these.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            Error::StepRejected { .. }
                | Error::SolverBreakdown { .. }
                | Error::PositivityViolation { .. }
                | Error::SingularTension(_)
                | Error::NotImmersed(_)
        )
    }
}
