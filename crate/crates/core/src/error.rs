//! Solver-level error type shared by the oracle, refinement, and driver
//! modules.

use std::fmt;

use crate::linalg::LinalgError;
use crate::model::ModelError;

#[derive(Debug, Clone, PartialEq)]
pub enum SolveError {
    /// A linear solve failed underneath an oracle or driver.
    Linalg(LinalgError),
    /// Problem validation failed.
    Model(ModelError),
    /// An oracle could not meet its stationarity tolerance.
    OracleFailure(String),
    /// The outer refinement loop exhausted its iteration budget.
    IterationLimit { budget: usize },
    /// Backtracking halved the step 60 times without an Armijo decrease.
    LineSearchStalled,
    /// A rescaled oracle answer fell short of the residual value its
    /// approximation contract promises.
    CertificationFailed { achieved: f64, required: f64 },
    /// The ν search grid is empty; the start point is already optimal to the
    /// requested accuracy.
    EmptyGrid,
    /// The γ rescaling is undefined at q = 2; use the exact quadratic oracle.
    DegenerateQ,
    /// The initial point is identically zero, so the zero vector is optimal.
    ZeroInitial,
    /// A reference minimizer hit its hard iteration cap.
    NoConvergence,
}

impl fmt::Display for SolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Linalg(e) => write!(f, "linear solve failed: {e}"),
            Self::Model(e) => write!(f, "invalid problem: {e}"),
            Self::OracleFailure(msg) => write!(f, "oracle failure: {msg}"),
            Self::IterationLimit { budget } => {
                write!(f, "refinement exceeded its iteration budget of {budget}")
            }
            Self::LineSearchStalled => write!(f, "line search stalled after 60 halvings"),
            Self::CertificationFailed { achieved, required } => write!(
                f,
                "certification failed: achieved residual {achieved:.3e} < required {required:.3e}"
            ),
            Self::EmptyGrid => write!(f, "empty search grid: start point already optimal"),
            Self::DegenerateQ => write!(f, "gamma rescaling undefined at q = 2"),
            Self::ZeroInitial => write!(f, "initial point is zero"),
            Self::NoConvergence => write!(f, "reference minimizer did not converge"),
        }
    }
}

impl std::error::Error for SolveError {}

impl From<LinalgError> for SolveError {
    fn from(e: LinalgError) -> Self {
        Self::Linalg(e)
    }
}

impl From<ModelError> for SolveError {
    fn from(e: ModelError) -> Self {
        Self::Model(e)
    }
}
