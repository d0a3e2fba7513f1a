use thiserror::Error;

/// Errors raised by the library.
///
/// Shape mismatches on the hot evaluation paths (`forward`, `backward`, ...)
/// are programmer errors and panic instead.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or degenerate input data.
    #[error("data error: {0}")]
    Data(String),

    /// Inconsistent model structure (orders, layer sizes, channel counts).
    #[error("structure error: {0}")]
    Structure(String),

    #[error("index {index} out of range: {reason}")]
    Index { index: usize, reason: String },

    /// The optimizer could not produce a step.
    #[error("solver error: {0}")]
    Solver(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
