use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("all weights are zero")]
    AllZero,
    #[error("weight {index} is negative ({value})")]
    NegativeWeight { index: usize, value: f64 },
    #[error("weight {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
    #[error("probabilities sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },
    #[error("token {token} is outside a vocabulary of size {vocab_size}")]
    OutOfVocab { token: u32, vocab_size: usize },
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("an ensemble needs at least one member")]
    EmptyEnsemble,
    #[error("input {input} is outside a world of {inputs} inputs")]
    UnknownInput { input: u32, inputs: usize },
    #[error("invalid context: {0}")]
    InvalidContext(String),
    #[error("invalid config `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("schema version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { expected: u32, found: u32 },
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("no hypothesis reached EOS within {max_len} steps")]
    NoFinishedHypothesis { max_len: usize },
    #[error("search space of {size:e} sequences exceeds the cap of {cap}")]
    SearchSpaceTooLarge { size: f64, cap: u64 },
    #[error("world mismatch: {0}")]
    WorldMismatch(String),
    #[error("bin edges must be strictly ascending")]
    UnsortedEdges,
    #[error("series has zero variance; correlation is undefined")]
    DegenerateVariance,
    #[error("series lengths differ or are too short ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed document: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// Stable machine-readable category, used by the CLI error stream.
    pub fn category(&self) -> &'static str {
        match self {
            Error::AllZero
            | Error::NegativeWeight { .. }
            | Error::NonFinite { .. }
            | Error::NotNormalized { .. } => "invalid_distribution",
            Error::OutOfVocab { .. } => "out_of_vocab",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::EmptyEnsemble => "empty_ensemble",
            Error::UnknownInput { .. } => "unknown_input",
            Error::InvalidContext(_) => "invalid_context",
            Error::InvalidConfig { .. } => "invalid_config",
            Error::SchemaVersionMismatch { .. } => "schema_version_mismatch",
            Error::InvariantViolation(_) => "invariant_violation",
            Error::NoFinishedHypothesis { .. } => "no_finished_hypothesis",
            Error::SearchSpaceTooLarge { .. } => "search_space_too_large",
            Error::WorldMismatch(_) => "world_mismatch",
            Error::UnsortedEdges => "unsorted_edges",
            Error::DegenerateVariance => "degenerate_variance",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
        }
    }

    pub fn invalid_config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field,
            reason: reason.into(),
        }
    }
}
