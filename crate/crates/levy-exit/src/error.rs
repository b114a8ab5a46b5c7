use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Inputs outside the stated domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A numeric procedure failed (root finding, degeneracy, quadrature).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Model parameters violate the structural invariants.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// Identity identifier not present in the dispatch table.
    #[error("unknown identity: {0}")]
    UnknownIdentity(String),
}

pub type Result<T> = std::result::Result<T, Error>;
