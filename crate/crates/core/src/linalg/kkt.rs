//! Equality-constrained quadratic solves through the Schur complement.
//!
//! Everything here solves one problem shape:
//!
//! ```text
//!     minimize   Σ_e w_e Δ_e² + cᵀΔ     subject to   C Δ = rhs
//! ```
//!
//! with strictly positive weights. Stationarity gives
//! `Δ = (Cᵀy − c) / (2w)` where the multipliers solve
//! `C diag(1/2w) Cᵀ y = rhs + C (c/2w)`. The Schur matrix is factored
//! directly with diagonal-pivoted Cholesky up to [`DIRECT_LIMIT`] rows
//! (the pivoting doubles as rank detection, dropping redundant constraint
//! rows), and solved by Jacobi-preconditioned conjugate gradients above
//! it. Factored solves are polished by iterative refinement: the quadratic
//! weights span many orders of magnitude, and the refinement recovers the
//! accuracy a single triangular solve loses.
//!
//! An extra scalar gradient constraint `gᵀΔ = target` is handled by
//! superposition against the same factorization rather than by stacking
//! `g` into the Schur matrix, which would mix scales badly: the solution
//! is `Δ_base + λ·Δ_g`, where `Δ_g` is the weighted projection of `g` onto
//! the null space of `C` and `λ` matches the target exactly.

use super::{LinalgError, SparseMatrix};
use crate::vec_ops::{all_finite, axpy, dot, norm2};

/// Largest Schur complement factored directly.
const DIRECT_LIMIT: usize = 2000;

/// Relative pivot threshold below which a constraint row is treated as
/// redundant.
const RANK_TOL: f64 = 1e-12;

/// Relative floor applied to quadratic weights before they enter a KKT
/// diagonal. Weights of the form |x_e|^{p-2} vanish at zero coordinates and
/// would make the quadratic singular.
pub(crate) const WEIGHT_FLOOR_REL: f64 = 1e-12;

/// An equality-constrained diagonal quadratic: minimize `Σ d_e Δ_e²`
/// subject to `constraints · Δ = rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct KktSystem {
    /// Quadratic weights, one per variable; strictly positive.
    pub diagonal: Vec<f64>,
    /// Stacked constraint rows (typically `A`, optionally a gradient row).
    pub constraints: SparseMatrix,
    /// Right-hand side, one entry per constraint row.
    pub rhs: Vec<f64>,
}

impl KktSystem {
    pub fn new(
        diagonal: Vec<f64>,
        constraints: SparseMatrix,
        rhs: Vec<f64>,
    ) -> Result<Self, LinalgError> {
        if constraints.cols() != diagonal.len() {
            return Err(LinalgError::ShapeMismatch("diagonal length vs constraint columns"));
        }
        if constraints.rows() != rhs.len() {
            return Err(LinalgError::ShapeMismatch("rhs length vs constraint rows"));
        }
        Ok(Self { diagonal, constraints, rhs })
    }
}

/// Clamp weights from below at `WEIGHT_FLOOR_REL · max(w)` (absolute
/// `WEIGHT_FLOOR_REL` when all weights vanish).
pub(crate) fn floor_weights(weights: &[f64]) -> Vec<f64> {
    let max = weights.iter().fold(0.0_f64, |a, &w| a.max(w));
    let floor = if max > 0.0 { WEIGHT_FLOOR_REL * max } else { WEIGHT_FLOOR_REL };
    weights.iter().map(|&w| w.max(floor)).collect()
}

/// Solve the constrained quadratic described by `system`.
///
/// The result `Δ` satisfies `‖CΔ − rhs‖₂ ≤ tolerance·(1 + ‖rhs‖₂)` and the
/// stationarity condition `2DΔ = Cᵀy` up to the same tolerance; redundant
/// constraint rows are detected and dropped during factorization.
pub fn solve_linear(system: &KktSystem, tolerance: f64) -> Result<Vec<f64>, LinalgError> {
    if tolerance <= 0.0 {
        return Err(LinalgError::ShapeMismatch("tolerance must be positive"));
    }
    if system.diagonal.iter().any(|&d| !d.is_finite()) || !all_finite(&system.rhs) {
        return Err(LinalgError::NonFinite);
    }
    if system.diagonal.iter().any(|&d| d <= 0.0) {
        return Err(LinalgError::NonPositiveDiagonal);
    }
    solve_eq_qp(&system.diagonal, &system.constraints, &system.rhs, None, tolerance)
}

/// Exact minimizer of `Σ_e weights_e Δ_e²` subject to `AΔ = b` and
/// `gᵀΔ = target`. Weights are floored per the module policy before the
/// solve.
pub fn min_quadratic_on_affine(
    weights: &[f64],
    a: &SparseMatrix,
    b: &[f64],
    g: &[f64],
    target: f64,
    tolerance: f64,
) -> Result<Vec<f64>, LinalgError> {
    let w = floor_weights(weights);
    solve_eq_qp_with_gradient_row(&w, a, b, None, g, target, tolerance)
}

/// General workhorse: minimize `Σ w_e Δ_e² + cᵀΔ` subject to `CΔ = rhs`.
pub(crate) fn solve_eq_qp(
    weights: &[f64],
    constraints: &SparseMatrix,
    rhs: &[f64],
    linear: Option<&[f64]>,
    tolerance: f64,
) -> Result<Vec<f64>, LinalgError> {
    let ctx = SchurContext::new(weights, constraints, rhs.len(), linear)?;
    let delta = ctx.minimize(rhs, linear, tolerance)?;
    ctx.check_violation(&delta, rhs, tolerance)?;
    Ok(delta)
}

/// Same quadratic with one extra scalar constraint `gᵀΔ = target`, solved
/// by superposition so the gradient row never enters the Schur matrix.
pub(crate) fn solve_eq_qp_with_gradient_row(
    weights: &[f64],
    constraints: &SparseMatrix,
    rhs: &[f64],
    linear: Option<&[f64]>,
    g: &[f64],
    target: f64,
    tolerance: f64,
) -> Result<Vec<f64>, LinalgError> {
    if g.len() != weights.len() {
        return Err(LinalgError::ShapeMismatch("gradient length vs variable count"));
    }
    let ctx = SchurContext::new(weights, constraints, rhs.len(), linear)?;
    let base = ctx.minimize(rhs, linear, tolerance)?;

    // Weighted projection of g onto the null space of the constraints:
    // minimize Σ w Δ² − gᵀΔ over CΔ = 0, which lands on g/(2w) plus a
    // multiplier correction. At the exact projection gᵀΔ_g = 2 Σ w Δ_g²,
    // strictly positive unless g is orthogonal to the null space.
    let neg_g: Vec<f64> = g.iter().map(|&v| -v).collect();
    let zeros = vec![0.0; constraints.rows()];
    let projected = ctx.minimize(&zeros, Some(&neg_g), tolerance)?;
    let gain = dot(g, &projected);
    let gain_scale = norm2(g) * norm2(&projected);
    if gain.is_nan() || gain <= 1e-14 * gain_scale {
        // No usable feasible direction for the gradient target.
        if (target - dot(g, &base)).abs() <= tolerance * (1.0 + target.abs()) {
            return Ok(base);
        }
        return Err(LinalgError::InfeasibleConstraint);
    }

    let mut delta = base;
    let lambda = (target - dot(g, &delta)) / gain;
    axpy(lambda, &projected, &mut delta);
    // Alternate between restoring CΔ = rhs (hurt by the λ scaling when λ is
    // large) and re-centering the gradient target.
    for _ in 0..2 {
        if constraints.rows() > 0 {
            let achieved = constraints.matvec(&delta)?;
            let gap: Vec<f64> = rhs.iter().zip(&achieved).map(|(&r, &v)| r - v).collect();
            if norm2(&gap) > 0.01 * tolerance * (1.0 + norm2(rhs)) {
                let correction = ctx.minimize(&gap, None, tolerance)?;
                axpy(1.0, &correction, &mut delta);
            }
        }
        let offset = target - dot(g, &delta);
        if offset != 0.0 {
            axpy(offset / gain, &projected, &mut delta);
        }
    }
    if !all_finite(&delta) {
        return Err(LinalgError::InfeasibleConstraint);
    }

    ctx.check_violation(&delta, rhs, tolerance)
        .map_err(|_| LinalgError::InfeasibleConstraint)?;
    let g_violation = (dot(g, &delta) - target).abs();
    if g_violation > tolerance * (1.0 + target.abs()) {
        return Err(LinalgError::InfeasibleConstraint);
    }
    Ok(delta)
}

/// A factored (or implicitly iterated) Schur complement for one weight
/// vector and constraint matrix, reusable across right-hand sides.
struct SchurContext<'a> {
    constraints: &'a SparseMatrix,
    inv2w: Vec<f64>,
    solver: SchurSolver,
}

enum SchurSolver {
    Direct { factor: Vec<f64>, perm: Vec<usize>, rank: usize },
    Iterative,
}

impl<'a> SchurContext<'a> {
    fn new(
        weights: &[f64],
        constraints: &'a SparseMatrix,
        rhs_len: usize,
        linear: Option<&[f64]>,
    ) -> Result<Self, LinalgError> {
        let m = weights.len();
        if constraints.cols() != m {
            return Err(LinalgError::ShapeMismatch("constraint columns vs variable count"));
        }
        if constraints.rows() != rhs_len {
            return Err(LinalgError::ShapeMismatch("constraint rows vs rhs length"));
        }
        if let Some(c) = linear {
            if c.len() != m {
                return Err(LinalgError::ShapeMismatch("linear term length"));
            }
        }
        if weights.iter().any(|&w| w <= 0.0 || !w.is_finite()) {
            return Err(LinalgError::NonPositiveDiagonal);
        }
        let inv2w: Vec<f64> = weights.iter().map(|&w| 1.0 / (2.0 * w)).collect();

        let n = constraints.rows();
        let solver = if n == 0 {
            SchurSolver::Iterative
        } else if n <= DIRECT_LIMIT {
            let mut s = build_schur(constraints, &inv2w);
            if !all_finite(&s) {
                return Err(LinalgError::NonFinite);
            }
            let (perm, rank) = pivoted_cholesky(&mut s, n);
            SchurSolver::Direct { factor: s, perm, rank }
        } else {
            SchurSolver::Iterative
        };
        Ok(Self { constraints, inv2w, solver })
    }

    /// `S·v` without forming S.
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let mut t = self.constraints.matvec_t(v)?;
        for (te, &s) in t.iter_mut().zip(&self.inv2w) {
            *te *= s;
        }
        self.constraints.matvec(&t)
    }

    /// Minimize `Σ w Δ² + cᵀΔ` subject to `CΔ = rhs`, without the
    /// feasibility post-check.
    fn minimize(
        &self,
        rhs: &[f64],
        linear: Option<&[f64]>,
        tolerance: f64,
    ) -> Result<Vec<f64>, LinalgError> {
        let m = self.inv2w.len();
        // Unconstrained minimizer; the multiplier correction is added on
        // top.
        let base: Vec<f64> = match linear {
            Some(c) => c.iter().zip(&self.inv2w).map(|(&ci, &s)| -ci * s).collect(),
            None => vec![0.0; m],
        };
        if self.constraints.rows() == 0 {
            return if all_finite(&base) { Ok(base) } else { Err(LinalgError::NonFinite) };
        }
        let cb = self.constraints.matvec(&base)?;
        let schur_rhs: Vec<f64> = rhs.iter().zip(&cb).map(|(&r, &v)| r - v).collect();
        // The Schur residual equals the final constraint violation; aim an
        // order under the contract tolerance.
        let target = 0.1 * tolerance * (1.0 + norm2(rhs));
        let y = self.multipliers(&schur_rhs, target)?;
        let cty = self.constraints.matvec_t(&y)?;
        let mut delta = base;
        for e in 0..m {
            delta[e] += cty[e] * self.inv2w[e];
        }
        if !all_finite(&delta) {
            return Err(LinalgError::NonFinite);
        }
        Ok(delta)
    }

    fn multipliers(&self, rhs: &[f64], target: f64) -> Result<Vec<f64>, LinalgError> {
        match &self.solver {
            SchurSolver::Direct { factor, perm, rank } => {
                let n = self.constraints.rows();
                let mut y = factor_solve(factor, perm, *rank, n, rhs);
                // Iterative refinement against the true operator.
                let mut last_norm = f64::INFINITY;
                for _ in 0..6 {
                    let sy = self.apply(&y)?;
                    let residual: Vec<f64> =
                        rhs.iter().zip(&sy).map(|(&r, &v)| r - v).collect();
                    let rnorm = norm2(&residual);
                    if !rnorm.is_finite() || rnorm <= target || rnorm >= 0.5 * last_norm {
                        break;
                    }
                    last_norm = rnorm;
                    let correction = factor_solve(factor, perm, *rank, n, &residual);
                    axpy(1.0, &correction, &mut y);
                }
                Ok(y)
            }
            SchurSolver::Iterative => self.pcg(rhs, target),
        }
    }

    fn pcg(&self, rhs: &[f64], target: f64) -> Result<Vec<f64>, LinalgError> {
        let n = self.constraints.rows();
        // Jacobi preconditioner from the Schur diagonal.
        let mut diag = vec![0.0; n];
        for &(r, c, v) in self.constraints.entries() {
            diag[r] += v * v * self.inv2w[c];
        }
        let dmax = diag.iter().fold(0.0_f64, |a, &d| a.max(d));
        let dfloor = (RANK_TOL * dmax).max(f64::MIN_POSITIVE);
        for d in &mut diag {
            *d = d.max(dfloor);
        }

        let mut x = vec![0.0; n];
        let mut r = rhs.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&diag).map(|(&ri, &di)| ri / di).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let max_iter = 20 * n + 200;
        for _ in 0..max_iter {
            if norm2(&r) <= target {
                return Ok(x);
            }
            let sp = self.apply(&p)?;
            let psp = dot(&p, &sp);
            if psp <= 0.0 || !psp.is_finite() {
                return Err(LinalgError::SingularSystem);
            }
            let alpha = rz / psp;
            axpy(alpha, &p, &mut x);
            axpy(-alpha, &sp, &mut r);
            for (zi, (&ri, &di)) in z.iter_mut().zip(r.iter().zip(&diag)) {
                *zi = ri / di;
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for (pi, &zi) in p.iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
        }
        if norm2(&r) <= target {
            Ok(x)
        } else {
            Err(LinalgError::SingularSystem)
        }
    }

    fn check_violation(
        &self,
        delta: &[f64],
        rhs: &[f64],
        tolerance: f64,
    ) -> Result<(), LinalgError> {
        if self.constraints.rows() == 0 {
            return Ok(());
        }
        let achieved = self.constraints.matvec(delta)?;
        let violation = norm2(&crate::vec_ops::sub(&achieved, rhs));
        if violation > tolerance * (1.0 + norm2(rhs)) {
            return Err(LinalgError::SingularSystem);
        }
        Ok(())
    }
}

/// Dense Schur complement `S = C diag(s) Cᵀ` stored row-major.
fn build_schur(constraints: &SparseMatrix, scale: &[f64]) -> Vec<f64> {
    let n = constraints.rows();
    let mut s = vec![0.0; n * n];
    for (e, col) in constraints.by_cols().iter().enumerate() {
        let se = scale[e];
        for &(i, vi) in col {
            for &(j, vj) in col {
                s[i * n + j] += vi * vj * se;
            }
        }
    }
    s
}

/// Triangular solves against a pivoted Cholesky factor. Coordinates past
/// the numerical rank get a zero multiplier; the feasibility post-check
/// decides consistency.
fn factor_solve(factor: &[f64], perm: &[usize], rank: usize, n: usize, rhs: &[f64]) -> Vec<f64> {
    let mut z: Vec<f64> = (0..rank).map(|i| rhs[perm[i]]).collect();
    for i in 0..rank {
        for k in 0..i {
            z[i] -= factor[perm[i] * n + perm[k]] * z[k];
        }
        z[i] /= factor[perm[i] * n + perm[i]];
    }
    for i in (0..rank).rev() {
        for k in i + 1..rank {
            z[i] -= factor[perm[k] * n + perm[i]] * z[k];
        }
        z[i] /= factor[perm[i] * n + perm[i]];
    }
    let mut y = vec![0.0; n];
    for i in 0..rank {
        y[perm[i]] = z[i];
    }
    y
}

/// In-place diagonal-pivoted Cholesky. Returns the pivot order and the
/// numerical rank; the factor L lives in the pivoted lower triangle.
fn pivoted_cholesky(s: &mut [f64], n: usize) -> (Vec<usize>, usize) {
    let mut perm: Vec<usize> = (0..n).collect();
    let max_diag = (0..n).fold(0.0_f64, |a, i| a.max(s[i * n + i]));
    let threshold = RANK_TOL * max_diag.max(f64::MIN_POSITIVE);
    let mut rank = n;
    for j in 0..n {
        // Largest remaining diagonal entry becomes the next pivot.
        let (mut best, mut best_val) = (j, f64::NEG_INFINITY);
        for i in j..n {
            let d = s[perm[i] * n + perm[i]];
            if d > best_val {
                best = i;
                best_val = d;
            }
        }
        if best_val <= threshold {
            rank = j;
            break;
        }
        perm.swap(j, best);
        let pj = perm[j];
        let ljj = best_val.sqrt();
        s[pj * n + pj] = ljj;
        for &pi in &perm[j + 1..] {
            s[pi * n + pj] /= ljj;
        }
        for i in j + 1..n {
            let pi = perm[i];
            let lij = s[pi * n + pj];
            if lij == 0.0 {
                continue;
            }
            // Keep the active block symmetric: later pivot swaps may flip
            // which triangle a pair lands in.
            for &pk in &perm[j + 1..=i] {
                let v = lij * s[pk * n + pj];
                s[pi * n + pk] -= v;
                if pk != pi {
                    s[pk * n + pi] -= v;
                }
            }
        }
    }
    (perm, rank)
}
