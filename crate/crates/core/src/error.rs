use std::path::PathBuf;
use thiserror::Error;

/// Errors surfaced by loading, validation, and the learning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed document {file}: {detail}")]
    MalformedDocument { file: String, detail: String },

    #[error("subclass cycle: {}", cycle.join(" -> "))]
    SubclassCycle { cycle: Vec<String> },

    #[error("unknown {kind} `{uri}`")]
    UnknownEntity { kind: &'static str, uri: String },

    #[error("model {model}: dangling reference to node `{node}`")]
    DanglingReference { model: String, node: String },

    #[error("model {model}: {detail}")]
    InvalidModel { model: String, detail: String },

    #[error("source {name}: row {row} has {got} values, expected {expected}")]
    RaggedRow {
        name: String,
        row: usize,
        got: usize,
        expected: usize,
    },

    #[error("source {file}: {detail}")]
    InvalidSource { file: String, detail: String },

    #[error("duplicate model id `{id}`")]
    DuplicateModel { id: String },

    #[error("attribute `{attribute}` of source {name} has no data node in its model")]
    TrainingCoverage { name: String, attribute: String },

    #[error("labeler has not been trained")]
    NotTrained,

    #[error("invalid score weights: {detail}")]
    InvalidWeights { detail: String },

    #[error("no candidate model could be generated: {detail}")]
    NoModel { detail: String },

    #[error("invalid configuration: {detail}")]
    InvalidConfig { detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
