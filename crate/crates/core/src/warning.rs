use serde::{Deserialize, Serialize};

/// A non-fatal diagnostic recorded by a stage and surfaced in reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Warning {
    pub stage: String,
    pub kind: String,
    pub message: String,
}

impl Warning {
    pub fn new(stage: &str, kind: &str, message: impl Into<String>) -> Self {
        let message = message.into();
        log::warn!("[{stage}/{kind}] {message}");
        Self {
            stage: stage.to_string(),
            kind: kind.to_string(),
            message,
        }
    }
}
