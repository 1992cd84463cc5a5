use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(diffsim::Error),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } => 1,
        }
    }
}

impl From<diffsim::Error> for CliError {
    fn from(e: diffsim::Error) -> Self {
        match e {
            diffsim::Error::InvalidSpec(m) | diffsim::Error::InvalidConfig(m) => CliError::Config(m),
            other => CliError::Numerical(other),
        }
    }
}
