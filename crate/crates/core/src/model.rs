//! Problem and solution types shared by the solver modules.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::linalg::{solve_linear, KktSystem, LinalgError, SparseMatrix};
use crate::vec_ops::{abs_pow, all_finite, norm2, sub};

/// Upper guard on exponents. The theory allows any polynomially bounded
/// exponent without quantifying the polynomial; this is a configuration
/// default, not a derived bound.
pub const MAX_EXPONENT: f64 = 1e12;

/// Tolerance used by [`ConstrainedProblem::validate`] for the range check
/// of the right-hand side.
pub const VALIDATE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    BadExponent(f64),
    DimensionMismatch(&'static str),
    /// `b` is not in the range of `A`; carries the least-squares residual.
    InfeasibleRhs { residual: f64 },
    Overflow,
    NonFinite,
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::BadExponent(p) => {
                write!(f, "exponent {p} outside the supported range [2, {MAX_EXPONENT:e}]")
            }
            Self::DimensionMismatch(what) => write!(f, "dimension mismatch: {what}"),
            Self::InfeasibleRhs { residual } => {
                write!(f, "right-hand side is not in the range of A (residual {residual:.3e})")
            }
            Self::Overflow => write!(f, "objective overflowed the representable range"),
            Self::NonFinite => write!(f, "non-finite input"),
        }
    }
}

impl std::error::Error for ModelError {}

/// The regression instance: minimize `‖x‖_p^p` subject to `Ax = b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedProblem {
    pub a: SparseMatrix,
    pub b: Vec<f64>,
    pub p: f64,
}

impl ConstrainedProblem {
    pub fn new(a: SparseMatrix, b: Vec<f64>, p: f64) -> Result<Self, ModelError> {
        if a.rows() != b.len() {
            return Err(ModelError::DimensionMismatch("A rows vs b length"));
        }
        if !(2.0..=MAX_EXPONENT).contains(&p) {
            return Err(ModelError::BadExponent(p));
        }
        if !all_finite(&b) {
            return Err(ModelError::NonFinite);
        }
        Ok(Self { a, b, p })
    }

    /// Number of variables (columns of `A`).
    pub fn variables(&self) -> usize {
        self.a.cols()
    }

    /// Full validation: the structural invariants plus a range check that
    /// some `x` with `Ax = b` exists.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.a.rows() != self.b.len() {
            return Err(ModelError::DimensionMismatch("A rows vs b length"));
        }
        if !(2.0..=MAX_EXPONENT).contains(&self.p) {
            return Err(ModelError::BadExponent(self.p));
        }
        if !all_finite(&self.b) {
            return Err(ModelError::NonFinite);
        }
        match self.feasible_point(VALIDATE_TOL) {
            Ok(_) => Ok(()),
            Err(LinalgError::SingularSystem) => {
                let residual = self.least_squares_residual();
                Err(ModelError::InfeasibleRhs { residual })
            }
            Err(LinalgError::NonFinite) => Err(ModelError::NonFinite),
            Err(_) => Err(ModelError::DimensionMismatch("constraint system")),
        }
    }

    /// Minimum-Euclidean-norm point of the affine set `Ax = b`.
    pub fn feasible_point(&self, tolerance: f64) -> Result<Vec<f64>, LinalgError> {
        let sys = KktSystem::new(
            vec![1.0; self.variables()],
            self.a.clone(),
            self.b.clone(),
        )?;
        solve_linear(&sys, tolerance)
    }

    fn least_squares_residual(&self) -> f64 {
        // Best-effort diagnostic: residual of the consistent part after the
        // rank-revealing solve, measured through A on the returned point.
        match self.feasible_point(1.0) {
            Ok(x) => match self.a.matvec(&x) {
                Ok(ax) => norm2(&sub(&ax, &self.b)),
                Err(_) => f64::INFINITY,
            },
            Err(_) => f64::INFINITY,
        }
    }
}

/// The local model built around an iterate `x`: maximize
/// `gᵀΔ − 2 Σ_e r_e Δ_e² − ‖Δ‖_p^p` over `AΔ = 0`, with
/// `g = |x|^{p−2} x` and `r = |x|^{p−2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualProblem {
    pub g: Vec<f64>,
    pub r: Vec<f64>,
    pub p: f64,
    pub base_point: Vec<f64>,
}

/// Which smoothed-problem shape an oracle instance takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothedForm {
    /// `min Σ r_e Δ_e² + s‖Δ‖_q^q` s.t. `gᵀΔ = target`, `AΔ = 0`; built for
    /// stage exponents at or above `q`.
    ConstrainedLargeP,
    /// Same shape with the small-exponent smoothing coefficient.
    ConstrainedSmallP,
    /// `min gᵀΔ + 2 Σ r_e Δ_e² + s‖Δ‖_q^q` s.t. `AΔ = 0`; the gradient term
    /// lives in the objective and `target` is unused.
    UnconstrainedGradient,
}

/// A smoothed `q`-norm oracle instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedProblem {
    pub r: Vec<f64>,
    pub s: f64,
    pub q: f64,
    pub g: Vec<f64>,
    pub target: f64,
    pub a: SparseMatrix,
    pub form: SmoothedForm,
}

impl SmoothedProblem {
    /// Objective value at `delta` for this problem's form.
    pub fn objective(&self, delta: &[f64]) -> f64 {
        let quad: f64 = self
            .r
            .iter()
            .zip(delta)
            .map(|(&re, &de)| re * de * de)
            .sum();
        let norm_term: f64 = delta.iter().map(|&de| abs_pow(de, self.q)).sum();
        match self.form {
            SmoothedForm::ConstrainedLargeP | SmoothedForm::ConstrainedSmallP => {
                quad + self.s * norm_term
            }
            SmoothedForm::UnconstrainedGradient => {
                crate::vec_ops::dot(&self.g, delta) + 2.0 * quad + self.s * norm_term
            }
        }
    }
}

/// A feasible point together with its certification data.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub kappa_certificate: Option<f64>,
    pub feasibility_residual: f64,
}

/// Per-iteration diagnostics kept out of the serialized report.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IterationDetail {
    /// ν of the step that was taken (0 when the null step won).
    pub nu: f64,
    /// Best residual objective achieved across the grid, measured on the
    /// conservatively rescaled answers.
    pub best_residual: f64,
    /// Whether any grid value met its scale-back certificate this iteration.
    pub any_certified: bool,
    /// Whether a non-null step was taken.
    pub step_taken: bool,
}

/// Run telemetry. The serialized form carries exactly the five public
/// counters and traces; `details` is in-process diagnostics only.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub oracle_calls: usize,
    pub objective_trace: Vec<f64>,
    pub nu_trace: Vec<f64>,
    pub wall_time: f64,
    #[serde(skip)]
    pub details: Vec<IterationDetail>,
}

impl SolveReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Fold another stage's counters and traces into this report.
    pub fn absorb(&mut self, other: SolveReport) {
        self.iterations += other.iterations;
        self.oracle_calls += other.oracle_calls;
        self.objective_trace.extend(other.objective_trace);
        self.nu_trace.extend(other.nu_trace);
        self.wall_time += other.wall_time;
        self.details.extend(other.details);
    }
}

/// `Σ_e |x_e|^p`, each term evaluated in the log domain.
pub fn pnorm_objective(x: &[f64], p: f64) -> Result<f64, ModelError> {
    if p < 1.0 {
        return Err(ModelError::BadExponent(p));
    }
    if !all_finite(x) {
        return Err(ModelError::NonFinite);
    }
    let total: f64 = x.iter().map(|&v| abs_pow(v, p)).sum();
    if total.is_finite() {
        Ok(total)
    } else {
        Err(ModelError::Overflow)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pnorm_unit_entries() {
        assert_eq!(pnorm_objective(&[1.0, -1.0, 1.0], 4.0).unwrap(), 3.0);
    }

    #[test]
    fn pnorm_single_power() {
        assert!((pnorm_objective(&[2.0, 0.0], 3.0).unwrap() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn pnorm_half_entries_at_p10() {
        let v = pnorm_objective(&[0.5, 0.5], 10.0).unwrap();
        assert!((v - 2.0 * 2f64.powi(-10)).abs() < 1e-15);
        assert!((v - 0.001953125).abs() < 1e-15);
    }

    #[test]
    fn pnorm_p2_is_squared_euclidean() {
        let x = [1.5, -2.25, 0.75];
        let direct: f64 = x.iter().map(|v| v * v).sum();
        let got = pnorm_objective(&x, 2.0).unwrap();
        assert!((got - direct).abs() <= 1e-14 * direct);
    }

    #[test]
    fn validate_accepts_simple_instance() {
        let a = SparseMatrix::from_dense(&[vec![1.0, 1.0]]).unwrap();
        let p = ConstrainedProblem::new(a, vec![2.0], 4.0).unwrap();
        assert!(p.validate().is_ok());
    }

    #[test]
    fn validate_rejects_small_exponent() {
        let a = SparseMatrix::from_dense(&[vec![1.0, 1.0]]).unwrap();
        assert!(matches!(
            ConstrainedProblem::new(a, vec![2.0], 1.5),
            Err(ModelError::BadExponent(_))
        ));
    }

    #[test]
    fn validate_rejects_contradictory_constraints() {
        let a = SparseMatrix::from_dense(&[vec![1.0], vec![1.0]]).unwrap();
        let p = ConstrainedProblem::new(a, vec![1.0, 2.0], 2.0).unwrap();
        assert!(matches!(p.validate(), Err(ModelError::InfeasibleRhs { .. })));
    }

    #[test]
    fn report_json_has_exactly_the_public_fields() {
        let report = SolveReport {
            iterations: 3,
            oracle_calls: 7,
            objective_trace: vec![2.0, 1.5],
            nu_trace: vec![4.0, 2.0],
            wall_time: 0.25,
            details: vec![IterationDetail::default()],
        };
        let json = report.to_json();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        let obj = value.as_object().unwrap();
        let mut keys: Vec<_> = obj.keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            vec!["iterations", "nu_trace", "objective_trace", "oracle_calls", "wall_time"]
        );
        let back = SolveReport::from_json(&json).unwrap();
        assert_eq!(back.iterations, 3);
        assert!(back.details.is_empty());
    }
}
