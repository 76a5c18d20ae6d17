use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// A rollout produced a non-finite state or one whose magnitude exceeds
    /// the divergence threshold. `step` is the index of the first bad state.
    #[error("rollout diverged at state index {step}")]
    Diverged { step: usize },
    /// Classical (inverse/log) barriers are undefined for `h <= 0`.
    #[error("barrier evaluated outside its domain: constraint {constraint} has h = {h}")]
    BarrierDomain { constraint: usize, h: f64 },
    /// `Q_uu + reg·I` was not positive definite at this step.
    #[error("backward pass failed: regularized Q_uu not positive definite at step {step}")]
    BackwardPass { step: usize },
    #[error("pitch angle {theta} too close to the Euler-angle singularity")]
    GimbalLock { theta: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("instance generation failed: {0}")]
    Generation(String),
    #[error("scenario config error: {0}")]
    Config(String),
}
