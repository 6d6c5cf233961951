use thiserror::Error;

/// Harness-level failures. Core numerics errors pass through unchanged;
/// everything the harness adds is about configs, schedules and artifacts.
#[derive(Debug, Error)]
pub enum LabError {
    #[error(transparent)]
    Core(#[from] vplab_core::CoreError),

    #[error("config: {0}")]
    Config(String),

    /// The requested parameter point violates the admissibility schedules.
    /// Carries the violated inequalities verbatim so the refusal names them.
    #[error("inadmissible regime: {0}; pass --force to run anyway")]
    Inadmissible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("report serialization: {0}")]
    Json(#[from] serde_json::Error),
}

impl LabError {
    pub fn config(msg: impl Into<String>) -> Self {
        LabError::Config(msg.into())
    }
}
