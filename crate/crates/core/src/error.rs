//! Error types shared across the simulator.

use thiserror::Error;

/// Violation of a mathematical precondition (negative distance, coincident
/// positions, bad enum value, ...).
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{msg}")]
pub struct DomainError {
    msg: String,
}

impl DomainError {
    pub fn new(msg: impl Into<String>) -> Self {
        DomainError { msg: msg.into() }
    }
}

/// Scenario configuration rejected before the run starts. Carries the
/// offending field path so the CLI can print a field-level diagnostic.
#[derive(Debug, Clone, Error)]
#[error("config error at {field}: {msg}")]
pub struct ConfigError {
    pub field: String,
    pub msg: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, msg: impl Into<String>) -> Self {
        ConfigError {
            field: field.into(),
            msg: msg.into(),
        }
    }
}

/// Failure while the event loop is running.
#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
