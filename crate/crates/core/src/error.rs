//! Error type shared across the crate.

use alloc::string::String;
use core::fmt;

/// Errors raised by tensor ops, network construction, training, and IO-free
/// serialization. Shape errors name the offending dimension in the message.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Tensor shape or dimension violation.
    Shape(String),
    /// Invalid configuration value or unparseable config text.
    Config(String),
    /// Autodiff graph misuse (non-scalar loss, unknown node, bad eps).
    Graph(String),
    /// Optimizer contract violation (e.g. missing gradient).
    Optim(String),
    /// Checkpoint encoding/decoding failure.
    Checkpoint(String),
    /// Training loss became non-finite at the named step.
    Diverged { step: usize },
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(msg) => write!(f, "shape error: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Graph(msg) => write!(f, "graph error: {msg}"),
            Error::Optim(msg) => write!(f, "optimizer error: {msg}"),
            Error::Checkpoint(msg) => write!(f, "checkpoint error: {msg}"),
            Error::Diverged { step } => {
                write!(f, "training diverged: loss became non-finite at step {step}")
            }
        }
    }
}

impl core::error::Error for Error {}
