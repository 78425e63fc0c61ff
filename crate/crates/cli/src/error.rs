use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] uabs_core::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    WorldMismatch(String),
    #[error("input changed since the manifest was written: {0}")]
    InputChanged(String),
    #[error("replayed outputs differ from the manifest: {0}")]
    ReplayMismatch(String),
}

impl CliError {
    /// Machine-readable category printed on the error stream.
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.category(),
            CliError::Config(_) => "invalid_config",
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "format",
            CliError::WorldMismatch(_) => "world_mismatch",
            CliError::InputChanged(_) => "input_changed",
            CliError::ReplayMismatch(_) => "replay_mismatch",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}
