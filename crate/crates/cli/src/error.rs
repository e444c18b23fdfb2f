//! Pipeline errors carry the failing stage name and map onto process exit
//! codes: 2 config, 3 data, 4 algorithm.

use thiserror::Error;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_ALGORITHM: i32 = 4;

#[derive(Debug, Error)]
#[error("{stage}: {message}")]
pub struct PipelineError {
    pub stage: &'static str,
    pub message: String,
    pub exit_code: i32,
}

impl PipelineError {
    pub fn config(message: String) -> Self {
        Self { stage: "config", message, exit_code: EXIT_CONFIG }
    }

    pub fn data(stage: &'static str, message: String) -> Self {
        Self { stage, message, exit_code: EXIT_DATA }
    }

    pub fn algorithm(stage: &'static str, message: String) -> Self {
        Self { stage, message, exit_code: EXIT_ALGORITHM }
    }

    /// Machine-readable form printed to stderr on failure.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "stage": self.stage,
            "error": self.message,
            "exit_code": self.exit_code,
        })
        .to_string()
    }
}
