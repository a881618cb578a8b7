//! Engine error types.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("dates and weights must have equal length (got {dates} dates, {weights} weights)")]
    LengthMismatch { dates: usize, weights: usize },

    #[error("need at least one monitoring date")]
    EmptySchedule,

    #[error("monitoring dates must be positive and strictly increasing")]
    BadDates,

    #[error("weight at index {0} is zero")]
    ZeroWeight(usize),

    #[error("weight vector cannot be normalized (all zero or non-finite)")]
    BadWeights,

    #[error("date count must be at least {min} (got {got})")]
    TooFewDates { min: u32, got: u32 },

    #[error("scheme state became non-finite during simulation")]
    NonFiniteState,

    #[error("Milstein scheme requires the diffusion derivative")]
    MissingDiffusionDerivative,

    #[error("the unbiased coupled estimator requires the Milstein scheme")]
    UnbiasedNeedsMilstein,

    #[error("epsilon must lie in (0, 1/2), got {0}")]
    BadEpsilon(f64),

    #[error("need at least {min} replications (got {got})")]
    TooFewReplications { min: u64, got: u64 },
}
