use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at position {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("N = {n} is too small for a {k}-localized map (need N >= {min})")]
    TooFewSites { n: usize, k: usize, min: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no Hopf bifurcation for F > 0: no mode has a positive real part")]
    NoHopf,

    #[error("degenerate: {0}")]
    Degenerate(String),

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error("blow-up at t = {t}: |x| = {norm:e} exceeds the guard")]
    BlowUp { t: f64, norm: f64 },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("step budget of {max_steps} exhausted at t = {t}")]
    TooManySteps { t: f64, max_steps: usize },

    #[error("singular Jacobian after {iterations} iterations (residual {residual:e})")]
    SingularJacobian { iterations: usize, residual: f64 },

    #[error("Newton did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("quantity {0} is not applicable here")]
    Inapplicable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by malformed input rather than by the mathematics.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::TooFewSites { .. }
                | Error::LengthMismatch { .. }
                | Error::InvalidArgument(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
