//! Error types shared across the crate.

/// Errors produced by model evaluation, solving, fitting, and data access.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument violated a precondition (non-finite value, bad range, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration value is out of range or inconsistent.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// The requested operation does not apply to this objective kind.
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// `exp(eta)` exceeded the representable range; the derivative was
    /// saturated at a finite cap instead of silently overflowing.
    #[error("numeric overflow: exp({eta}) out of range, derivative saturated to {saturated}")]
    NumericOverflow { eta: f64, saturated: f64 },

    /// The fixed-point bracket never produced a sign change, which points at
    /// a non-monotone user-supplied derivative.
    #[error("solver failure: no sign change in [{lo}, {hi}] after widening")]
    SolverFailure { lo: f64, hi: f64 },

    /// The root search ran out of iterations.
    #[error("root search did not converge in {iterations} iterations (best xi {best_xi}, residual {residual})")]
    ConvergenceFailure {
        iterations: usize,
        best_xi: f64,
        residual: f64,
    },

    /// An iterate left the finite range during a fit.
    #[error("divergence at update {update_index}: iterate norm {norm}")]
    Divergence { update_index: u64, norm: f64 },

    /// A row of a delimited file failed to parse.
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    /// Row arity or column naming did not match the expected schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// Vector lengths disagree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialize(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
