use std::path::{Path, PathBuf};

use cbc_core::synthesis::PipelineError;
use thiserror::Error;

use crate::config::ConfigError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    /// A certified negative answer: rank deficiency, infeasible program,
    /// level gap not met.
    #[error("{0}")]
    Rejected(String),
    #[error("verification failed: {0}")]
    VerificationFailed(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_owned(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Rejected(_) | CliError::VerificationFailed(_) => 1,
            CliError::Usage(_) | CliError::Io { .. } | CliError::Input(_) | CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let msg = e.to_string();
        match e {
            _ if e.is_numerical() => CliError::Numerical(msg),
            PipelineError::Data(_) | PipelineError::Transform(_) => CliError::Input(msg),
            _ => CliError::Rejected(msg),
        }
    }
}
