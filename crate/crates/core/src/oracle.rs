//! Smoothed-problem solvers behind one interface: an exact quadratic
//! solve for `q = 2`, a damped Newton method for general `q`, and an
//! `ℓ∞`-box method for the box-constrained surrogate.

use crate::error::SolveError;
use crate::linalg::{
    floor_weights, min_quadratic_on_affine, solve_eq_qp, solve_eq_qp_with_gradient_row,
    LinalgError, SparseMatrix,
};
use crate::model::{ApproxSolution, SmoothedForm, SmoothedProblem};
use crate::vec_ops::{abs_pow, dot, norm_inf, signed_pow};

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: u32 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleKind {
    /// Exact equality-constrained quadratic solve; requires `q = 2`.
    Exact2,
    /// Damped Newton on the smoothed objective, any `q ≥ 2`.
    Newton,
    /// Interior-point maximization over the `ℓ∞` box.
    Box,
}

/// Oracle configuration plus the refinement-loop constants that ride along
/// with it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub kind: OracleKind,
    pub max_inner_iterations: usize,
    pub tolerance: f64,
    /// Approximation factor the oracle promises on smoothed objectives.
    pub beta_promise: f64,
    /// Worker threads for the ν grid inside the refinement loop.
    pub threads: usize,
    /// The constant `c` in the refinement iteration budget.
    pub refine_constant: f64,
    /// Divisor in the early-termination rule
    /// `accuracy · objective / (termination_constant · k · m)`.
    pub termination_constant: f64,
}

impl OracleConfig {
    pub fn exact2() -> Self {
        Self {
            kind: OracleKind::Exact2,
            max_inner_iterations: 50,
            tolerance: 1e-10,
            beta_promise: 1.0 + 1e-9,
            threads: 1,
            refine_constant: 2.0,
            termination_constant: 16.0,
        }
    }

    pub fn newton() -> Self {
        Self {
            kind: OracleKind::Newton,
            max_inner_iterations: 80,
            tolerance: 1e-10,
            beta_promise: 2.0,
            ..Self::exact2()
        }
    }

    pub fn box_method() -> Self {
        Self {
            kind: OracleKind::Box,
            max_inner_iterations: 60,
            beta_promise: 2.0,
            ..Self::exact2()
        }
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads.max(1);
        self
    }
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self::exact2()
    }
}

/// Solve a smoothed problem with the configured method. The answer
/// satisfies the problem's equality constraints within tolerance and its
/// objective is within `beta_promise` of the optimum (exact up to linear
/// solver tolerance for `Exact2`).
pub fn solve_smoothed(
    sp: &SmoothedProblem,
    cfg: &OracleConfig,
) -> Result<ApproxSolution, SolveError> {
    let m = sp.r.len();
    if sp.g.len() != m || sp.a.cols() != m {
        return Err(SolveError::Linalg(LinalgError::ShapeMismatch(
            "smoothed problem dimensions",
        )));
    }
    match cfg.kind {
        OracleKind::Exact2 => solve_exact2(sp, cfg),
        OracleKind::Newton => solve_newton(sp, cfg),
        OracleKind::Box => Err(SolveError::OracleFailure(
            "box oracle solves box problems, not smoothed problems".into(),
        )),
    }
}

fn solve_exact2(sp: &SmoothedProblem, cfg: &OracleConfig) -> Result<ApproxSolution, SolveError> {
    if (sp.q - 2.0).abs() > 1e-12 {
        return Err(SolveError::OracleFailure(format!(
            "exact2 oracle requires q = 2, got q = {}",
            sp.q
        )));
    }
    let zeros = vec![0.0; sp.a.rows()];
    let x = match sp.form {
        SmoothedForm::ConstrainedLargeP | SmoothedForm::ConstrainedSmallP => {
            // q = 2 folds the smoothing term into the quadratic weights.
            let merged: Vec<f64> = sp.r.iter().map(|&re| re + sp.s).collect();
            min_quadratic_on_affine(&merged, &sp.a, &zeros, &sp.g, sp.target, cfg.tolerance)?
        }
        SmoothedForm::UnconstrainedGradient => {
            let merged: Vec<f64> = sp.r.iter().map(|&re| 2.0 * re + sp.s).collect();
            let w = floor_weights(&merged);
            solve_eq_qp(&w, &sp.a, &zeros, Some(&sp.g), cfg.tolerance)?
        }
    };
    Ok(finish(sp, x))
}

fn solve_newton(sp: &SmoothedProblem, cfg: &OracleConfig) -> Result<ApproxSolution, SolveError> {
    let mut x = newton_start(sp, cfg)?;
    for _ in 0..cfg.max_inner_iterations {
        let (next, decrement) = damped_newton_step(sp, &x, cfg.tolerance)?;
        x = next;
        if decrement <= cfg.tolerance * (1.0 + objective_value(sp, &x).abs()) {
            return Ok(finish(sp, x));
        }
    }
    let (_, decrement) = damped_newton_step(sp, &x, cfg.tolerance)?;
    Err(SolveError::OracleFailure(format!(
        "newton oracle stalled with decrement {decrement:.3e} above tolerance {:.3e}",
        cfg.tolerance
    )))
}

/// Feasible and cheap start: the same problem with the q-norm term dropped.
fn newton_start(sp: &SmoothedProblem, cfg: &OracleConfig) -> Result<Vec<f64>, SolveError> {
    let zeros = vec![0.0; sp.a.rows()];
    let x = match sp.form {
        SmoothedForm::ConstrainedLargeP | SmoothedForm::ConstrainedSmallP => {
            min_quadratic_on_affine(&sp.r, &sp.a, &zeros, &sp.g, sp.target, cfg.tolerance)?
        }
        SmoothedForm::UnconstrainedGradient => {
            let doubled: Vec<f64> = sp.r.iter().map(|&re| 2.0 * re).collect();
            let w = floor_weights(&doubled);
            solve_eq_qp(&w, &sp.a, &zeros, Some(&sp.g), cfg.tolerance)?
        }
    };
    Ok(x)
}

fn objective_value(sp: &SmoothedProblem, x: &[f64]) -> f64 {
    sp.objective(x)
}

fn gradient(sp: &SmoothedProblem, x: &[f64]) -> Vec<f64> {
    match sp.form {
        SmoothedForm::ConstrainedLargeP | SmoothedForm::ConstrainedSmallP => x
            .iter()
            .enumerate()
            .map(|(e, &v)| 2.0 * sp.r[e] * v + sp.s * sp.q * signed_pow(v, sp.q - 1.0))
            .collect(),
        SmoothedForm::UnconstrainedGradient => x
            .iter()
            .enumerate()
            .map(|(e, &v)| sp.g[e] + 4.0 * sp.r[e] * v + sp.s * sp.q * signed_pow(v, sp.q - 1.0))
            .collect(),
    }
}

fn hessian_diag(sp: &SmoothedProblem, x: &[f64]) -> Vec<f64> {
    let curvature = |v: f64| sp.s * sp.q * (sp.q - 1.0) * abs_pow(v, sp.q - 2.0);
    match sp.form {
        SmoothedForm::ConstrainedLargeP | SmoothedForm::ConstrainedSmallP => x
            .iter()
            .enumerate()
            .map(|(e, &v)| 2.0 * sp.r[e] + curvature(v))
            .collect(),
        SmoothedForm::UnconstrainedGradient => x
            .iter()
            .enumerate()
            .map(|(e, &v)| 4.0 * sp.r[e] + curvature(v))
            .collect(),
    }
}

/// One damped Newton step restricted to the feasible affine subspace:
/// KKT solve with the floored Hessian diagonal, then backtracking until an
/// Armijo decrease.
pub fn newton_step(sp: &SmoothedProblem, current: &[f64]) -> Result<Vec<f64>, SolveError> {
    damped_newton_step(sp, current, 1e-11).map(|(x, _)| x)
}

fn damped_newton_step(
    sp: &SmoothedProblem,
    current: &[f64],
    tolerance: f64,
) -> Result<(Vec<f64>, f64), SolveError> {
    let grad = gradient(sp, current);
    let hess = floor_weights(&hessian_diag(sp, current));
    let weights: Vec<f64> = hess.iter().map(|&h| 0.5 * h).collect();

    // Step directions stay in the null space of the active constraints.
    let zeros = vec![0.0; sp.a.rows()];
    let direction = match sp.form {
        SmoothedForm::ConstrainedLargeP | SmoothedForm::ConstrainedSmallP => {
            solve_eq_qp_with_gradient_row(
                &weights,
                &sp.a,
                &zeros,
                Some(&grad),
                &sp.g,
                0.0,
                tolerance,
            )?
        }
        SmoothedForm::UnconstrainedGradient => {
            solve_eq_qp(&weights, &sp.a, &zeros, Some(&grad), tolerance)?
        }
    };
    let slope = dot(&grad, &direction);
    let decrement = -slope;
    if decrement <= 0.0 {
        return Ok((current.to_vec(), 0.0));
    }

    let f0 = objective_value(sp, current);
    let mut t = 1.0_f64;
    for _ in 0..MAX_HALVINGS {
        let trial: Vec<f64> = current
            .iter()
            .zip(&direction)
            .map(|(&xe, &de)| xe + t * de)
            .collect();
        let ft = objective_value(sp, &trial);
        if ft.is_finite() && ft <= f0 + ARMIJO * t * slope {
            return Ok((trial, decrement));
        }
        t *= 0.5;
    }
    Err(SolveError::LineSearchStalled)
}

fn finish(sp: &SmoothedProblem, x: Vec<f64>) -> ApproxSolution {
    let mut residual = sp.a.matvec(&x).map(|ax| norm_inf(&ax)).unwrap_or(f64::INFINITY);
    if matches!(
        sp.form,
        SmoothedForm::ConstrainedLargeP | SmoothedForm::ConstrainedSmallP
    ) {
        residual = residual.max((dot(&sp.g, &x) - sp.target).abs());
    }
    ApproxSolution {
        objective: sp.objective(&x),
        kappa_certificate: None,
        feasibility_residual: residual,
        x,
    }
}

/// Maximize `gᵀΔ − 2 Σ r_e Δ_e²` over `‖Δ‖_∞ ≤ radius` intersected with
/// `AΔ = 0`, by a log-barrier interior-point method. The certificate
/// reports the achieved objective ratio against a separable upper bound.
pub fn solve_box(
    g: &[f64],
    r: &[f64],
    radius: f64,
    a: &SparseMatrix,
    cfg: &OracleConfig,
) -> Result<ApproxSolution, SolveError> {
    let m = g.len();
    if r.len() != m || a.cols() != m {
        return Err(SolveError::Linalg(LinalgError::ShapeMismatch("box problem dimensions")));
    }
    if radius <= 0.0 || !radius.is_finite() {
        return Err(SolveError::Linalg(LinalgError::ShapeMismatch(
            "box radius must be positive",
        )));
    }

    let value = |x: &[f64]| -> f64 {
        dot(g, x) - 2.0 * r.iter().zip(x).map(|(&re, &v)| re * v * v).sum::<f64>()
    };

    let scale = norm_inf(g) * radius + 1.0;
    let mut x = vec![0.0; m];
    let mut mu = 0.25 * scale;
    let mu_floor = 1e-10 * scale;
    let zeros = vec![0.0; a.rows()];
    while mu > mu_floor {
        for _ in 0..cfg.max_inner_iterations {
            // Minimize −value(Δ) + barrier.
            let grad: Vec<f64> = (0..m)
                .map(|e| {
                    -g[e] + 4.0 * r[e] * x[e] + mu * (1.0 / (radius - x[e]) - 1.0 / (radius + x[e]))
                })
                .collect();
            let hess: Vec<f64> = (0..m)
                .map(|e| {
                    4.0 * r[e]
                        + mu * (1.0 / ((radius - x[e]) * (radius - x[e]))
                            + 1.0 / ((radius + x[e]) * (radius + x[e])))
                })
                .collect();
            let weights: Vec<f64> = floor_weights(&hess).iter().map(|&h| 0.5 * h).collect();
            let d = solve_eq_qp(&weights, a, &zeros, Some(&grad), cfg.tolerance)?;
            let slope = dot(&grad, &d);
            let decrement = -slope;
            if decrement <= 0.1 * mu {
                break;
            }
            // Largest step keeping strictly inside the box.
            let mut t_max = 1.0_f64;
            for (xe, de) in x.iter().zip(&d) {
                if *de > 0.0 {
                    t_max = t_max.min(0.99 * (radius - xe) / de);
                } else if *de < 0.0 {
                    t_max = t_max.min(0.99 * (-radius - xe) / de);
                }
            }
            let barrier = |p: &[f64]| -> f64 {
                -value(p)
                    - mu * p
                        .iter()
                        .map(|&v| (radius - v).ln() + (radius + v).ln())
                        .sum::<f64>()
            };
            let f0 = barrier(&x);
            let mut t = t_max.max(0.0);
            let mut accepted = false;
            for _ in 0..MAX_HALVINGS {
                let trial: Vec<f64> =
                    x.iter().zip(&d).map(|(&xe, &de)| xe + t * de).collect();
                let ft = barrier(&trial);
                if ft.is_finite() && ft <= f0 + ARMIJO * t * slope {
                    x = trial;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                return Err(SolveError::LineSearchStalled);
            }
        }
        mu *= 0.2;
    }

    let achieved = value(&x);
    // Separable bound: drop AΔ = 0 and maximize each coordinate alone.
    let upper: f64 = (0..m)
        .map(|e| {
            let re = r[e];
            if re > 0.0 {
                let free = g[e] / (4.0 * re);
                if free.abs() <= radius {
                    g[e] * g[e] / (8.0 * re)
                } else {
                    g[e].abs() * radius - 2.0 * re * radius * radius
                }
            } else {
                g[e].abs() * radius
            }
        })
        .sum();
    let alpha = if upper <= 0.0 {
        1.0
    } else if achieved > 0.0 {
        (upper / achieved).max(1.0)
    } else {
        1e12
    };
    let feasibility = a.matvec(&x).map(|ax| norm_inf(&ax)).unwrap_or(f64::INFINITY);
    Ok(ApproxSolution {
        objective: achieved,
        kappa_certificate: Some(alpha),
        feasibility_residual: feasibility,
        x,
    })
}
