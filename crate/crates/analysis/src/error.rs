use refereval_microworld::MicroworldError;

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("no values to summarize")]
    Empty,
    #[error("need at least 2 paired differences, got {0}")]
    InsufficientData(usize),
    #[error("paired differences have zero variance")]
    DegenerateVariance,
    #[error("non-finite input value")]
    NonFinite,
    #[error("no usable data: {0}")]
    NoData(String),
    #[error(transparent)]
    Model(#[from] refereval_core::Error),
    #[error(transparent)]
    Microworld(#[from] MicroworldError),
    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;
