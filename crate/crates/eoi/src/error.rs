//! Crate-wide error type.
//!
//! Shape and finiteness violations are bugs in the caller and are reported
//! with enough context to locate them; config and data errors are expected
//! at the CLI boundary and map to distinct process exit codes there.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shape disagreement. Message names the operation and both shapes.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A NaN or infinity reached a place that must stay finite.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// Bad user-supplied configuration (unknown key, unparsable value, bad range).
    #[error("config: {0}")]
    Config(String),

    /// Structurally invalid data: corrupt checkpoint, malformed map, bad CSV.
    #[error("corrupt data: {0}")]
    Corrupt(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: config errors are 2, runtime errors 3.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            _ => 3,
        }
    }
}
