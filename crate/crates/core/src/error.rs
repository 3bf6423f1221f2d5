use thiserror::Error;

/// Errors produced by the models, solvers and harness.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The scenario admits no feasible point; `binding` names the constraint
    /// that could not be satisfied.
    #[error("infeasible: {binding}: {detail}")]
    Infeasible { binding: String, detail: String },

    #[error("no feasible start: binding constraint {binding} ({detail})")]
    NoFeasibleStart { binding: String, detail: String },

    /// Configuration failed validation. Every violated invariant is listed.
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("parse error: {0}")]
    Parse(String),

    /// A convex program was malformed (bad index, non-PSD quadratic form, ...).
    #[error("invalid program: {0}")]
    Program(String),

    /// Something that the algorithm guarantees cannot happen did happen.
    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors that stem from the scenario itself rather than from a
    /// bug or the environment. The CLI maps these to exit code 2.
    pub fn is_infeasible_config(&self) -> bool {
        matches!(
            self,
            Error::Infeasible { .. } | Error::NoFeasibleStart { .. } | Error::Config(_) | Error::Parse(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
