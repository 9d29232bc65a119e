use std::path::PathBuf;

pub type Result<T, E = SimError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] refereval_core::Error),
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("thread pool: {0}")]
    Pool(String),
}
