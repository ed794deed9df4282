use alloc::string::String;

/// Errors raised by the engine.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown agent id {0}")]
    UnknownAgent(usize),
    #[error("positivity violation: agent {agent} tested with g = {g}")]
    Positivity { agent: usize, g: f64 },
    #[error("contract violation: {0}")]
    Contract(String),
}

pub type Result<T> = core::result::Result<T, Error>;
