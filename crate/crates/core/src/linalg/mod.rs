//! Sparse matrices and the equality-constrained quadratic solves every
//! oracle is built on.

mod kkt;
mod mtx;
mod sparse;

pub use kkt::{min_quadratic_on_affine, solve_linear, KktSystem};
pub(crate) use kkt::{floor_weights, solve_eq_qp, solve_eq_qp_with_gradient_row};
pub use mtx::{
    matrix_market_string, read_matrix_market, read_matrix_market_str, read_vector,
    read_vector_str, write_matrix_market, write_vector,
};
pub use sparse::SparseMatrix;

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum LinalgError {
    /// Rank deficiency persisted after redundancy elimination, or the
    /// constraint set is inconsistent.
    SingularSystem,
    /// An intermediate value overflowed or was NaN.
    NonFinite,
    /// The target of a gradient constraint cannot be met on the feasible
    /// set.
    InfeasibleConstraint,
    /// A quadratic diagonal entry was zero or negative where a strictly
    /// positive one is required.
    NonPositiveDiagonal,
    /// Dimension mismatch between operands.
    ShapeMismatch(&'static str),
    /// An entry index is out of range.
    BadIndex { row: usize, col: usize, rows: usize, cols: usize },
    /// File I/O failed.
    Io(String),
    /// A text input could not be parsed; `line` is 1-based.
    Parse { line: usize, msg: String },
}

impl fmt::Display for LinalgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SingularSystem => write!(f, "singular or inconsistent constraint system"),
            Self::NonFinite => write!(f, "non-finite value encountered"),
            Self::InfeasibleConstraint => write!(f, "gradient constraint target is infeasible"),
            Self::NonPositiveDiagonal => write!(f, "quadratic diagonal must be strictly positive"),
            Self::ShapeMismatch(what) => write!(f, "shape mismatch: {what}"),
            Self::BadIndex { row, col, rows, cols } => {
                write!(f, "entry ({row}, {col}) out of range for {rows}x{cols} matrix")
            }
            Self::Io(msg) => write!(f, "i/o error: {msg}"),
            Self::Parse { line, msg } => write!(f, "parse error on line {line}: {msg}"),
        }
    }
}

impl std::error::Error for LinalgError {}
