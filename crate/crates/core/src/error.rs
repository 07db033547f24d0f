use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("rollout diverged at step {step}")]
    RolloutDivergence { step: usize },
    #[error("rollout diverged for initial state {index} at step {step}")]
    BatchRolloutDivergence { index: usize, step: usize },
    #[error("weights are degenerate: {0}")]
    WeightDegeneracy(&'static str),
    #[error("tempering schedule violation: new beta {new} is below current beta {current}")]
    ScheduleViolation { current: f64, new: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
