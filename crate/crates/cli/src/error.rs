use serde_json::json;
use swlp_core::SwlpError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] SwlpError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Core(_) => "model",
            Self::Io(_) | Self::Csv(_) => "io",
        }
    }

    /// Process exit status. Tolerance failures use 1 and are not errors.
    pub fn exit_code(&self) -> i32 {
        2
    }

    /// Machine-readable form printed on standard error.
    pub fn to_json(&self) -> serde_json::Value {
        json!({ "error": { "kind": self.kind(), "message": self.to_string() } })
    }
}
