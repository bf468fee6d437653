//! Crate-wide error type.

use std::fmt;

/// Errors surfaced by library operations.
#[derive(Debug)]
pub enum Error {
    /// An argument violates a documented precondition.
    InvalidInput(String),
    /// An enumeration or product space is larger than the configured budget.
    BudgetExceeded {
        required: u128,
        budget: usize,
    },
    /// A score or reward that must be finite hit the zero-probability sentinel.
    NonFiniteScore(String),
    /// Optimization produced a non-finite objective.
    Diverged {
        epoch: usize,
        objective: f64,
    },
    /// Task generation kept producing degenerate label splits.
    DegenerateTask {
        attempts: usize,
        detail: String,
    },
    /// A missing artifact that the caller was expected to provide.
    MissingArtifact(String),
    /// A data file failed to parse; `line` is 1-based.
    Malformed {
        path: String,
        line: usize,
        detail: String,
    },
    Io(std::io::Error),
    Json(serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Self::BudgetExceeded { required, budget } => write!(
                f,
                "enumeration budget exceeded: {required} candidates, budget {budget}"
            ),
            Self::NonFiniteScore(msg) => write!(f, "non-finite score: {msg}"),
            Self::Diverged { epoch, objective } => {
                write!(f, "objective diverged at epoch {epoch}: {objective}")
            }
            Self::DegenerateTask { attempts, detail } => {
                write!(f, "degenerate task after {attempts} attempts: {detail}")
            }
            Self::MissingArtifact(msg) => write!(f, "missing artifact: {msg}"),
            Self::Malformed { path, line, detail } => {
                write!(f, "{path}:{line}: {detail}")
            }
            Self::Io(err) => write!(f, "{err}"),
            Self::Json(err) => write!(f, "{err}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Self::Io(err) => Some(err),
            Self::Json(err) => Some(err),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Self::Io(err)
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Self::Json(err)
    }
}
