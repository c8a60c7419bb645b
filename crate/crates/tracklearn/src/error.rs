//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input had the wrong dimensions for the operation.
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    /// A model or configuration violated a structural requirement.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// A scalar parameter was outside its admissible range.
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// No vector relative degree exists for the model (decoupling matrix
    /// singular, or an output never responds to any input).
    #[error("vector relative degree undefined: {0}")]
    UndefinedRelativeDegree(String),

    /// A step-response record never showed a response on some output channel.
    #[error("relative degree undetectable: output {output} never responded within {samples} samples")]
    UndetectableDegree { output: usize, samples: usize },

    /// The observability matrix does not have full rank.
    #[error("system unobservable: observability matrix rank {rank} < state dimension {n}")]
    Unobservable { rank: usize, n: usize },

    /// The constraint set of a quadratic program admits no solution.
    #[error("infeasible constraint set; violated rows: {rows:?} (residual {residual:.3e})")]
    Infeasible { rows: Vec<usize>, residual: f64 },

    /// The QP solver did not reach the requested accuracy.
    #[error("solver failed to converge after {iterations} iterations (residual {residual:.3e})")]
    SolverFailure { iterations: usize, residual: f64 },

    /// The controller received a non-finite measurement.
    #[error("controller fault at step {step}: non-finite measurement")]
    ControllerFault { step: usize },

    /// The plant state became non-finite during a rollout.
    #[error("rollout diverged at step {step}")]
    DivergedRollout { step: usize },

    /// The transfer-map feedback source failed to supply a sample.
    #[error("missing feedback sample at step {step}")]
    MissingFeedback { step: usize },

    /// A trajectory name not present in the library.
    #[error("unknown trajectory '{name}'; valid names: {valid:?}")]
    UnknownTrajectory { name: String, valid: Vec<&'static str> },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}
