//! Crate-wide error type.

use thiserror::Error;

/// Unified error for every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration or argument value is out of its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Mesh or tool geometry is degenerate (zero-area element, node at a
    /// sphere centre, inverted Jacobian, ...).
    #[error("degenerate geometry: {0}")]
    Geometry(String),

    /// Tensor shapes do not line up for the named operation.
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// A numerical invariant broke down (non-finite value, singular scale).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// An API contract was violated (double backward, unbound parameter,
    /// mismatched checkpoint, forbidden split access, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A binary or CSV artefact is malformed or truncated.
    #[error("malformed artefact: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand used by tensor operations when operand shapes disagree.
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }
}
