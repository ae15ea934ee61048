use thiserror::Error;

/// Errors surfaced by graph construction, configuration and the engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("format error on line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("engine fault: {0}")]
    EngineFault(String),

    #[error("signing error: {0}")]
    Signing(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
