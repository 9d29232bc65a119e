use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{name} must be a probability in [0, 1], got {value}")]
    InvalidProbability { name: &'static str, value: f64 },

    #[error("invalid decision costs: {0}")]
    InvalidCosts(String),

    #[error("degenerate evidence: both prior-weighted likelihoods are zero")]
    DegenerateEvidence,

    #[error("task load {load} is outside the model domain {domain}")]
    LoadOutOfDomain { load: usize, domain: String },

    #[error("task load {load} exceeds batch size {batch_size}")]
    LoadExceedsBatch { load: usize, batch_size: usize },

    #[error("referral plan does not match batch: {0}")]
    PlanMismatch(String),

    #[error("duplicate task id {0} in batch")]
    DuplicateTask(u32),

    #[error("human observation means coincide at load {0}; threshold is undefined")]
    ZeroSeparation(usize),

    #[error("performance table is empty")]
    EmptyTable,

    #[error("invalid load set: {0}")]
    InvalidLoadSet(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
