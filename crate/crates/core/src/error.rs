use thiserror::Error;

/// Errors produced across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),

    #[error("invalid screen object: {0}")]
    InvalidScreenObject(String),

    #[error("invalid entity: {0}")]
    InvalidEntity(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("record {record}: {message}")]
    Validation { record: usize, message: String },

    #[error("entity {index} has no screen placement")]
    MissingPlacement { index: usize },

    #[error("invalid encoder configuration: {0}")]
    InvalidConfig(String),

    #[error("textualization rule for '{0}' is already registered")]
    DuplicateRule(String),

    #[error("invalid rule file: {0}")]
    RuleFile(String),

    #[error("prompt requires at least one candidate entity")]
    NoCandidates,

    #[error("onscreen parse contains no entity markers")]
    NoMarkers,

    #[error("template '{template}': {message}")]
    Template { template: String, message: String },

    #[error("negative pool has {available} entities but {requested} were requested per query")]
    NegativePoolTooSmall { available: usize, requested: usize },

    #[error("no value bank entry for entity type '{0}'")]
    UnknownBankType(String),

    #[error("resolver transport error: {0}")]
    Transport(String),

    #[error("{failed} of {total} resolver calls failed, above the tolerated rate")]
    TooManyTransportFailures { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
