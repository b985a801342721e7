use thiserror::Error;

/// Errors shared across the solver and oracle modules.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// An argument is outside the domain a function is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inputs describe a distribution or environment that violates a
    /// structural invariant (probabilities, ordering, positivity).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A requested construction has no solution for these parameters.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// The instance falls outside the class the solvers handle
    /// (for example a non-regular virtual valuation that would need ironing).
    #[error("unsupported instance: {0}")]
    Unsupported(String),

    /// An iterative solver exhausted its budget. Carries the last
    /// per-step objective change as a diagnostic.
    #[error("solver did not converge: {message} (last objective change {last_gap:.3e})")]
    NonConvergence { message: String, last_gap: f64 },

    /// A result would exceed a configured resource cap.
    #[error("resource limit: {0}")]
    Resource(String),

    /// An internal consistency check failed. This indicates a bug in the
    /// solver, not a property of the instance.
    #[error("internal inconsistency: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
