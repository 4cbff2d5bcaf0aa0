//! Paper-to-code reproduction pipeline.
//!
//! The pipeline has two halves. [`fingerprint`] turns a Markdown paper into a
//! list of atomic, source-grounded pass/fail criteria. [`codegen`] and
//! [`reflect`] then write an initial code workspace and iterate
//! verify → plan → refine against those criteria. [`scoring`] evaluates
//! workspaces and fingerprints against weighted rubric trees.
//!
//! All model traffic goes through [`gateway::Gateway`], which can record and
//! replay transcripts so that whole runs are reproducible offline.

pub mod artifacts;
pub mod codegen;
pub mod fingerprint;
pub mod gateway;
pub mod paper;
pub mod parallel;
pub mod reflect;
pub mod scoring;
pub mod warning;
pub mod workspace;

pub use gateway::{Gateway, GatewayError, Mode, Purpose};
pub use paper::{load_paper, PaperDoc, PaperError};
pub use warning::Warning;
pub use workspace::Workspace;

use thiserror::Error;

/// A pipeline stage that could not produce its output.
#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Paper(#[from] PaperError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("stage {stage} failed: {message}")]
    Failed { stage: String, message: String },
    #[error("artifact I/O: {0}")]
    Artifact(#[from] artifacts::ArtifactError),
}

impl StageError {
    pub fn failed(stage: impl Into<String>, message: impl Into<String>) -> Self {
        StageError::Failed {
            stage: stage.into(),
            message: message.into(),
        }
    }

    pub fn is_replay_miss(&self) -> bool {
        matches!(self, StageError::Gateway(e) if e.is_replay_miss())
    }
}

/// Re-prompts allowed after an unparseable reply before a stage gives up.
pub const MAX_REPROMPTS: u32 = 2;
