//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Errors produced by channel construction, precoding, power allocation,
/// selection, and the simulation driver.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or vector dimensions do not match the operation's contract.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// An index set is out of range or contains duplicates.
    #[error("index error: {0}")]
    Index(String),

    /// A scalar argument is outside its valid domain.
    #[error("argument error: {0}")]
    Argument(String),

    /// The Gram matrix is too ill-conditioned to invert reliably.
    #[error("conditioning error: gram condition {cond:.3e} exceeds {limit:.3e}")]
    IllConditioned { cond: f64, limit: f64 },

    /// An enumeration guard was exceeded (subset or combination search).
    #[error("capacity error: {0}")]
    Capacity(String),

    /// The optimization problem has no feasible point.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// An iterative solver stopped above its certification tolerance.
    /// Carries the best iterate found so the caller can inspect it.
    #[error(
        "convergence error: residual {residual:.3e} > tolerance {tolerance:.3e} \
         after {iterations} iterations"
    )]
    Convergence {
        residual: f64,
        tolerance: f64,
        iterations: usize,
        best: Vec<f64>,
    },

    /// A lookup target lies outside the supported range of a curve.
    #[error("range error: {0}")]
    Range(String),

    /// A documented invariant was violated (internal consistency check).
    #[error("invariant violation: {0}")]
    Invariant(String),

    /// A Monte Carlo trial failed; wraps the underlying cause.
    #[error("trial {trial} [{scheme}]: {source}")]
    Trial {
        trial: usize,
        scheme: String,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wrap an error with the trial/scheme context it occurred in.
    pub fn in_trial(self, trial: usize, scheme: &str) -> Error {
        Error::Trial {
            trial,
            scheme: scheme.to_string(),
            source: Box::new(self),
        }
    }
}
