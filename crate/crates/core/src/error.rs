use thiserror::Error;

/// Errors raised by the laboratory's numerical operations.
#[derive(Debug, Error)]
pub enum Error {
    /// A model or symbol produced a non-finite value.
    #[error("evaluation failed at p={p:?}, x={x:?}: {reason}")]
    Evaluation {
        p: Vec<f64>,
        x: Vec<f64>,
        reason: String,
    },

    /// The adaptive integrator could not make progress.
    #[error("integration diverged at t={t}: {reason}")]
    Divergence { t: f64, reason: String },

    /// A precondition of an operation was violated.
    #[error("contract violated: {0}")]
    Contract(String),

    /// The shell sampler rejected too many proposals.
    #[error("sampler misconfigured: {0}")]
    Sampler(String),

    /// The discretisation cannot represent the requested object.
    #[error("insufficient resolution: {0}")]
    Resolution(String),

    /// Finite-difference stencils left the trusted domain.
    #[error("windowing error: {0}")]
    Windowing(String),

    /// The dense eigensolver failed or its output violated an invariant.
    #[error("eigensolver failure: {0}")]
    Solver(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn eval(p: &[f64], x: &[f64], reason: impl Into<String>) -> Self {
        Error::Evaluation {
            p: p.to_vec(),
            x: x.to_vec(),
            reason: reason.into(),
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
