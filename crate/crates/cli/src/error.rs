use repro_core::artifacts::ArtifactError;
use repro_core::{GatewayError, StageError};
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_REPLAY_MISS: i32 = 3;
pub const EXIT_STAGE: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config, paper, rubric or run directory.
    #[error("{0}")]
    Input(String),
    #[error("replay miss: {0}")]
    ReplayMiss(String),
    #[error("{0}")]
    Stage(String),
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::ReplayMiss(_) => EXIT_REPLAY_MISS,
            CliError::Stage(_) => EXIT_STAGE,
        }
    }
}

impl From<StageError> for CliError {
    fn from(e: StageError) -> Self {
        if e.is_replay_miss() {
            return CliError::ReplayMiss(e.to_string());
        }
        match e {
            StageError::Paper(p) => CliError::Input(p.to_string()),
            other => CliError::Stage(other.to_string()),
        }
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        StageError::from(e).into()
    }
}

impl From<ArtifactError> for CliError {
    fn from(e: ArtifactError) -> Self {
        CliError::Stage(e.to_string())
    }
}
