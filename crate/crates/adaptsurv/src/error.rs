use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invariant failure: {0}")]
    Invariant(String),
    #[error(transparent)]
    Engine(#[from] adaptsurv_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("thread pool: {0}")]
    Pool(String),
}

impl HarnessError {
    /// Process exit code: 2 for configuration problems, 3 for invariant
    /// failures, 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Read { .. } => 2,
            HarnessError::Engine(adaptsurv_core::Error::Config(_)) => 2,
            HarnessError::Invariant(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
