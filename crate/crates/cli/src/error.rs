use conecast::{EngineError, ForwardError, ModelError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("outputs differ beyond tolerance")]
    Tolerance,
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Forward(#[from] ForwardError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Tolerance => 1,
            CliError::Input(_) | CliError::Model(_) | CliError::Forward(_) => 2,
            CliError::Engine(_) => 3,
        }
    }
}

pub fn io_error(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}
