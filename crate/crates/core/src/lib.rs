//! High-accuracy `ℓp`-norm minimization over affine constraint sets, and the
//! graph-flow problems that reduce to it.
//!
//! The library solves `min ‖x‖_p^p subject to Ax = b` for any exponent
//! `p ≥ 2` by iterative refinement: each outer step builds a local residual
//! model around the current iterate, hands a family of smoothed `q`-norm
//! subproblems to an oracle, rescales the best oracle answer, and takes a
//! monotone descent step. A doubling schedule over intermediate exponents
//! keeps the total oracle work roughly linear in `p`, which is what makes the
//! large-`p` regime (and the `(1+δ)`-approximate max-flow front end) viable.
//!
//! Module map:
//!
//! - [`linalg`] — sparse matrices, equality-constrained quadratic (KKT)
//!   solves, Matrix Market I/O. Everything else builds on these.
//! - [`model`] — problem/solution types and the `p`-norm objective.
//! - [`residual`] — residual models, the `ν` search grid, and the outer
//!   refinement loop.
//! - [`reduction`] — construction of the smoothed subproblems, the
//!   scale-back factors, box-constrained variants, and the `γ_q` rescaling.
//! - [`oracle`] — the smoothed-problem solvers: exact quadratic (`q = 2`),
//!   damped Newton (general `q`), and an `ℓ∞`-box method.
//! - [`homotopy`] — top-level drivers: exponent dispatch, the doubling
//!   schedule, and problem prescaling.
//! - [`flows`] — incidence matrices, `ℓp`-norm flows, approximate max-flow,
//!   and the edge-list text format.
//! - [`mod@reference`] — slow, independent brute-force minimizers used to
//!   certify optima in tests and diagnostics.

pub mod error;
pub mod flows;
pub mod homotopy;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod reduction;
pub mod reference;
pub mod residual;

mod timer;
mod vec_ops;

pub use error::SolveError;
pub use linalg::{KktSystem, LinalgError, SparseMatrix};
pub use model::{
    pnorm_objective, ApproxSolution, ConstrainedProblem, ModelError, ResidualProblem,
    SmoothedForm, SmoothedProblem, SolveReport,
};
pub use oracle::{OracleConfig, OracleKind};
