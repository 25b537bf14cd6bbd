use crate::instance::InstanceError;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SolverError {
    /// The perturbed instance reached a non-generic state. Retrying with a
    /// different seed is expected to succeed.
    #[error("genericity violation: {0}")]
    Genericity(String),
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("basic solution failed: {0}")]
    BasicSolutionFailed(String),
    #[error("phase budget of {0} exceeded")]
    WatchdogExceeded(usize),
    #[error("invalid perturbation: {0}")]
    Perturbation(String),
    #[error(transparent)]
    Input(#[from] InstanceError),
}

impl SolverError {
    pub fn is_genericity(&self) -> bool {
        matches!(self, SolverError::Genericity(_))
    }
}

pub type Result<T, E = SolverError> = std::result::Result<T, E>;

macro_rules! invariant {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::error::SolverError::InvariantViolation(format!($($arg)+)));
        }
    };
}
pub(crate) use invariant;
