use thiserror::Error;

/// Failure modes of the numerical and statistical pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what} did not converge within {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("no sign change of the target function in [{lo}, {hi}]")]
    NoRoot { lo: f64, hi: f64 },

    #[error("momentum grid encloses {enclosed:.4} of the density mass, {required:.4} required")]
    InsufficientCoverage { enclosed: f64, required: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("expected {expected} events, found a {found} event")]
    WrongPlane { expected: &'static str, found: &'static str },

    #[error("need at least {needed} events, got {got}")]
    InsufficientEvents { needed: usize, got: usize },

    #[error("events carry screen coordinates but no far-field geometry (mass, T2) is attached")]
    MissingFarFieldMetadata,

    #[error("source ensemble rejects {rate:.3} of the drawn displacements (blocked pairs)")]
    DegenerateEnsemble { rate: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
