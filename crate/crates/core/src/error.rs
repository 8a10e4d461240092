//! Error type shared by every module in the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An iterative numerical routine failed to converge or produced
    /// non-finite values.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// A simulation produced a non-finite state.
    #[error("simulation diverged at step {step} (t = {time})")]
    SimulationDiverged { step: usize, time: f64 },

    /// A requested dictionary would exceed the configured size cap.
    #[error("dictionary too large: {size} functions exceeds cap of {cap}")]
    DictionaryTooLarge { size: usize, cap: usize },

    /// A benchmark system failed its oscillation validation gate.
    #[error("validation gate failed: {0}")]
    NotOscillatory(String),

    /// A file could not be read or written.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A model, config, or data file could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
