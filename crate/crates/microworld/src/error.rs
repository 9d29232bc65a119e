use std::path::PathBuf;

pub type Result<T, E = MicroworldError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum MicroworldError {
    #[error(transparent)]
    Model(#[from] refereval_core::Error),
    #[error("task has no value for attribute `{0}`")]
    MissingAttribute(String),
    #[error("attribute `{attribute}` should be {expected}")]
    AttributeType { attribute: String, expected: &'static str },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("invalid decision tree: {0}")]
    InvalidTree(String),
    #[error("no leaf `{0}` in the automation tree")]
    UnknownLeaf(String),
    #[error("leaf `{leaf}`{} not reached in {attempts} draws", depth.map(|d| format!(" at depth {d}")).unwrap_or_default())]
    UnreachableLeaf { leaf: String, depth: Option<usize>, attempts: usize },
    #[error("leaf `{0}` has zero probability under both hypotheses")]
    DegenerateLeaf(String),
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error("cannot parse experiment configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}
