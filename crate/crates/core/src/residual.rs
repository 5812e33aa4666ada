//! Residual models, the ν search grid, and the outer refinement loop.

use crate::error::SolveError;
use crate::linalg::{solve_linear, KktSystem, LinalgError};
use crate::model::{
    ConstrainedProblem, IterationDetail, ResidualProblem, SolveReport,
};
use crate::oracle::{solve_box, solve_smoothed, OracleConfig, OracleKind};
use crate::reduction::{
    build_smoothed_large_p, build_smoothed_small_p, lp_box_problem, lp_box_scale_back,
    scale_back, Regime,
};
use crate::timer::Stopwatch;
use crate::vec_ops::{abs_pow, all_finite, dot, norm_inf, signed_pow};

/// Geometric ν grid: the values `2^i` for `i` in `lo_exponent..=hi_exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NuGrid {
    pub lo_exponent: i64,
    pub hi_exponent: i64,
}

impl NuGrid {
    pub fn len(&self) -> usize {
        (self.hi_exponent - self.lo_exponent + 1).max(0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.lo_exponent > self.hi_exponent
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (self.lo_exponent..=self.hi_exponent).map(|i| (i as f64).exp2())
    }
}

/// Build the residual model at `x` for exponent `p`:
/// `g_e = |x_e|^{p−2} x_e`, `r_e = |x_e|^{p−2}`.
pub fn build_residual(x: &[f64], p: f64) -> ResidualProblem {
    let g = x.iter().map(|&v| signed_pow(v, p - 1.0)).collect();
    let r = x.iter().map(|&v| abs_pow(v, p - 2.0)).collect();
    ResidualProblem { g, r, p, base_point: x.to_vec() }
}

/// `gᵀΔ − 2 Σ_e r_e Δ_e² − ‖Δ‖_p^p`
pub fn residual_objective(rp: &ResidualProblem, delta: &[f64]) -> f64 {
    let quad: f64 = rp.r.iter().zip(delta).map(|(&re, &de)| re * de * de).sum();
    let norm: f64 = delta.iter().map(|&de| abs_pow(de, rp.p)).sum();
    dot(&rp.g, delta) - 2.0 * quad - norm
}

/// Grid spanning `[log₂(β₋₁·‖x0‖_k^k / (k·m)), log₂(‖x0‖_k^k)]` with the
/// endpoints rounded outward to integers. `beta_minus_one` is the target
/// accuracy of the enclosing refinement call.
pub fn nu_grid(
    x0: &[f64],
    k: f64,
    m: usize,
    beta_minus_one: f64,
) -> Result<NuGrid, SolveError> {
    let norm: f64 = x0.iter().map(|&v| abs_pow(v, k)).sum();
    if norm <= 0.0 || !norm.is_finite() {
        return Err(SolveError::EmptyGrid);
    }
    let lo = (beta_minus_one * norm / (k * m as f64)).log2().floor() as i64;
    let hi = norm.log2().ceil() as i64;
    if lo > hi {
        return Err(SolveError::EmptyGrid);
    }
    Ok(NuGrid { lo_exponent: lo, hi_exponent: hi })
}

/// `Σ |x_e|^k` without the error plumbing, for hot loops.
pub(crate) fn knorm(x: &[f64], k: f64) -> f64 {
    x.iter().map(|&v| abs_pow(v, k)).sum()
}

/// A rescaled oracle answer together with the residual value its
/// approximation contract requires.
struct OracleStep {
    delta_bar: Vec<f64>,
    required_res: f64,
}

struct Candidate {
    x_new: Vec<f64>,
    objective: f64,
    residual_value: f64,
    certified: bool,
    nu: f64,
}

/// Outer refinement loop: drive `‖x‖_k^k` to within `(1 + accuracy)` of its
/// constrained optimum, solving one smoothed subproblem per grid value per
/// iteration.
///
/// Every iteration evaluates the whole ν grid against a frozen iterate,
/// rescales each oracle answer, and picks the step that minimizes the
/// k-norm objective among the rescaled steps, an exact line search along
/// each step direction, and the null step, so the objective never
/// increases. Termination: the best (conservatively rescaled) residual
/// value across the grid falls below
/// `accuracy · objective / (termination_constant · k · m)`.
pub fn refine(
    problem: &ConstrainedProblem,
    x0: &[f64],
    k: f64,
    accuracy: f64,
    q: f64,
    cfg: &OracleConfig,
) -> Result<(Vec<f64>, SolveReport), SolveError> {
    let m = problem.variables();
    if x0.len() != m {
        return Err(SolveError::Linalg(LinalgError::ShapeMismatch(
            "start point length vs variable count",
        )));
    }
    if !k.is_finite() || k < 2.0 || !accuracy.is_finite() || accuracy <= 0.0 {
        return Err(SolveError::Model(crate::model::ModelError::BadExponent(k)));
    }
    let q = effective_q(cfg, q);

    let watch = Stopwatch::start();
    let mut report = SolveReport::default();
    let mut x = x0.to_vec();
    restore_feasibility(&mut x, problem, cfg.tolerance)?;

    let grid = match nu_grid(&x, k, m, accuracy) {
        Ok(g) => g,
        Err(SolveError::EmptyGrid) => {
            report.wall_time = watch.elapsed_secs();
            return Ok((x, report));
        }
        Err(e) => return Err(e),
    };

    let budget = iteration_budget(k, q, m, accuracy, cfg);
    let mut converged = false;
    for _ in 0..budget {
        let rp = build_residual(&x, k);
        let obj = knorm(&x, k);
        let candidates = evaluate_grid(problem, &rp, &grid, k, q, m, cfg, &x)?;
        report.oracle_calls += grid.len();
        report.iterations += 1;

        let mut best_res = 0.0_f64;
        let mut any_certified = false;
        let mut chosen: Option<&Candidate> = None;
        for cand in candidates.iter().flatten() {
            best_res = best_res.max(cand.residual_value);
            any_certified |= cand.certified;
            let better = match chosen {
                Some(c) => cand.objective < c.objective,
                None => cand.objective < obj,
            };
            if better {
                chosen = Some(cand);
            }
        }

        // Floored at the double-precision noise level: below it, grid
        // residuals are indistinguishable from rounding error and further
        // iterations only accumulate drift.
        let threshold =
            (accuracy * obj / (cfg.termination_constant * k * m as f64)).max(1e-13 * obj);
        match chosen {
            Some(c) => {
                x = c.x_new.clone();
                report.objective_trace.push(c.objective);
                report.nu_trace.push(c.nu);
                report.details.push(IterationDetail {
                    nu: c.nu,
                    best_residual: best_res,
                    any_certified,
                    step_taken: true,
                });
                if best_res < threshold {
                    converged = true;
                    break;
                }
            }
            None => {
                report.details.push(IterationDetail {
                    nu: 0.0,
                    best_residual: best_res,
                    any_certified,
                    step_taken: false,
                });
                if best_res < threshold {
                    converged = true;
                    break;
                }
                if !any_certified {
                    return Err(SolveError::CertificationFailed {
                        achieved: best_res,
                        required: threshold,
                    });
                }
                return Err(SolveError::OracleFailure(
                    "certified residual value produced no descent step".into(),
                ));
            }
        }
    }
    if !converged {
        return Err(SolveError::IterationLimit { budget });
    }

    restore_feasibility(&mut x, problem, cfg.tolerance)?;
    report.wall_time = watch.elapsed_secs();
    Ok((x, report))
}

pub(crate) fn effective_q(cfg: &OracleConfig, q: f64) -> f64 {
    match cfg.kind {
        OracleKind::Exact2 => 2.0,
        _ => q.max(2.0),
    }
}

/// `⌈c · k · m^{(k/(k−1))·|1/q − 1/k|} · ln(m/accuracy)⌉`
fn iteration_budget(k: f64, q: f64, m: usize, accuracy: f64, cfg: &OracleConfig) -> usize {
    let exponent = (k / (k - 1.0)) * (1.0 / q - 1.0 / k).abs();
    let t = cfg.refine_constant
        * k
        * (m as f64).powf(exponent)
        * (m as f64 / accuracy).ln().max(1.0);
    t.ceil().max(1.0) as usize
}

#[allow(clippy::too_many_arguments)]
fn evaluate_grid(
    problem: &ConstrainedProblem,
    rp: &ResidualProblem,
    grid: &NuGrid,
    k: f64,
    q: f64,
    m: usize,
    cfg: &OracleConfig,
    x: &[f64],
) -> Result<Vec<Option<Candidate>>, SolveError> {
    let nus: Vec<f64> = grid.values().collect();
    if cfg.threads <= 1 {
        return nus
            .iter()
            .map(|&nu| grid_candidate(problem, rp, nu, k, q, m, cfg, x))
            .collect();
    }
    let chunk = nus.len().div_ceil(cfg.threads);
    let mut slots: Vec<Result<Option<Candidate>, SolveError>> = Vec::with_capacity(nus.len());
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for part in nus.chunks(chunk) {
            handles.push(scope.spawn(move || {
                part.iter()
                    .map(|&nu| grid_candidate(problem, rp, nu, k, q, m, cfg, x))
                    .collect::<Vec<_>>()
            }));
        }
        for h in handles {
            slots.extend(h.join().expect("grid worker panicked"));
        }
    });
    // First fatal error in grid order wins, keeping runs deterministic.
    let mut out = Vec::with_capacity(slots.len());
    for slot in slots {
        out.push(slot?);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn grid_candidate(
    problem: &ConstrainedProblem,
    rp: &ResidualProblem,
    nu: f64,
    k: f64,
    q: f64,
    m: usize,
    cfg: &OracleConfig,
    x: &[f64],
) -> Result<Option<Candidate>, SolveError> {
    let step = match oracle_step(problem, rp, nu, k, q, m, cfg) {
        Ok(s) => s,
        Err(e) if is_fatal(&e) => return Err(e),
        Err(_) => return Ok(None),
    };
    if !all_finite(&step.delta_bar) {
        return Ok(None);
    }
    let res_val = residual_objective(rp, &step.delta_bar);
    let certified = res_val.is_finite() && res_val >= step.required_res;

    // Step direction in x-space; t = 1 is the conservatively rescaled step.
    let d: Vec<f64> = step.delta_bar.iter().map(|&v| v / k).collect();
    let obj_at = |t: f64| -> f64 {
        x.iter()
            .zip(&d)
            .map(|(&xe, &de)| abs_pow(xe - t * de, k))
            .sum()
    };
    // Oracle answers satisfy AΔ = 0 only to tolerance; cap the search
    // scale so one step cannot trade feasibility for objective.
    let feasibility_cap = {
        let ad = problem.a.matvec(&d)?;
        let adn = norm_inf(&ad);
        if adn > 0.0 {
            (0.5 * cfg.tolerance * (1.0 + norm_inf(&problem.b)) / adn).max(1.0)
        } else {
            f64::INFINITY
        }
    };
    let t_star = line_search_scale(x, &d, k).min(feasibility_cap);
    let (obj_unit, obj_ls) = (obj_at(1.0), obj_at(t_star));
    let (t_best, obj_best) =
        if obj_ls.is_finite() && obj_ls < obj_unit { (t_star, obj_ls) } else { (1.0, obj_unit) };
    if !obj_best.is_finite() {
        return Ok(None);
    }
    let x_new: Vec<f64> = x.iter().zip(&d).map(|(&xe, &de)| xe - t_best * de).collect();
    Ok(Some(Candidate {
        x_new,
        objective: obj_best,
        residual_value: if res_val.is_finite() { res_val } else { 0.0 },
        certified,
        nu,
    }))
}

fn is_fatal(e: &SolveError) -> bool {
    matches!(
        e,
        SolveError::Linalg(LinalgError::ShapeMismatch(_))
            | SolveError::Linalg(LinalgError::BadIndex { .. })
            | SolveError::Model(_)
    )
}

fn oracle_step(
    problem: &ConstrainedProblem,
    rp: &ResidualProblem,
    nu: f64,
    k: f64,
    q: f64,
    m: usize,
    cfg: &OracleConfig,
) -> Result<OracleStep, SolveError> {
    match cfg.kind {
        OracleKind::Exact2 | OracleKind::Newton => {
            let sp = if k >= q {
                build_smoothed_large_p(rp, nu, q, &problem.a)
            } else {
                build_smoothed_small_p(rp, nu, q, &problem.a)
            };
            let sol = solve_smoothed(&sp, cfg)?;
            let regime = if k >= q { Regime::LargeP } else { Regime::SmallP };
            let sb = scale_back(regime, q, k, m, cfg.beta_promise);
            let delta_bar = sb.apply(&sol.x, &rp.g, nu);
            Ok(OracleStep { delta_bar, required_res: sb.alpha * nu / 4.0 })
        }
        OracleKind::Box => {
            let bp = lp_box_problem(rp, nu);
            let sol = solve_box(&rp.g, &rp.r, bp.radius_inf, &problem.a, cfg)?;
            let beta = (norm_inf(&sol.x) / bp.radius_inf).max(1.0);
            let alpha = sol.kappa_certificate.unwrap_or(cfg.beta_promise).max(1.0);
            let delta_bar = lp_box_scale_back(&sol.x, alpha, beta, k);
            let factor = (4.0 * alpha * beta).powf(-1.0 / (k - 1.0));
            Ok(OracleStep { delta_bar, required_res: factor * nu / (4.0 * alpha) })
        }
    }
}

/// Exact minimization of `t ↦ Σ |x_e − t·d_e|^k` over `t ≥ 0` by bisection
/// on the (monotone) derivative.
fn line_search_scale(x: &[f64], d: &[f64], k: f64) -> f64 {
    let slope = |t: f64| -> f64 {
        x.iter()
            .zip(d)
            .map(|(&xe, &de)| -k * signed_pow(xe - t * de, k - 1.0) * de)
            .sum()
    };
    let s0 = slope(0.0);
    if s0 >= 0.0 || s0.is_nan() {
        return 0.0;
    }
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    let mut expansions = 0;
    loop {
        let s = slope(hi);
        if !s.is_finite() || s >= 0.0 {
            break;
        }
        lo = hi;
        hi *= 2.0;
        expansions += 1;
        if expansions > 200 {
            return lo;
        }
    }
    for _ in 0..90 {
        let mid = 0.5 * (lo + hi);
        let s = slope(mid);
        if !s.is_finite() || s >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Project `x` back onto `{Ax = b}` by a least-norm correction. A no-op for
/// already feasible points; keeps drift from accumulating across stages.
pub(crate) fn restore_feasibility(
    x: &mut [f64],
    problem: &ConstrainedProblem,
    tolerance: f64,
) -> Result<(), SolveError> {
    if problem.a.rows() == 0 {
        return Ok(());
    }
    let ax = problem.a.matvec(x)?;
    let gap: Vec<f64> = problem.b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
    let scale = 1.0 + norm_inf(&problem.b);
    if norm_inf(&gap) <= 1e-15 * scale {
        return Ok(());
    }
    let sys = KktSystem::new(vec![1.0; x.len()], problem.a.clone(), gap)?;
    let correction = solve_linear(&sys, tolerance)?;
    for (xe, ce) in x.iter_mut().zip(&correction) {
        *xe += ce;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SparseMatrix;

    #[test]
    fn residual_weights_at_p2_are_unit() {
        let rp = build_residual(&[1.0, -1.0], 2.0);
        assert_eq!(rp.g, vec![1.0, -1.0]);
        assert_eq!(rp.r, vec![1.0, 1.0]);
    }

    #[test]
    fn residual_weights_direct_powers() {
        let rp = build_residual(&[2.0, -1.0, 0.0], 4.0);
        assert_eq!(rp.g, vec![8.0, -1.0, 0.0]);
        assert_eq!(rp.r, vec![4.0, 1.0, 0.0]);
        let rp3 = build_residual(&[3.0], 3.0);
        assert!((rp3.g[0] - 9.0).abs() < 1e-12);
        assert!((rp3.r[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn residual_objective_values() {
        let rp = ResidualProblem {
            g: vec![1.0],
            r: vec![1.0],
            p: 2.0,
            base_point: vec![1.0],
        };
        assert_eq!(residual_objective(&rp, &[0.0]), 0.0);
        assert!((residual_objective(&rp, &[0.25]) - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn residual_maximum_matches_grid_scan() {
        // Frozen from the 1-D scan of Δ − 3Δ² over [−1, 1]: max 1/12 at 1/6.
        let rp = ResidualProblem {
            g: vec![1.0],
            r: vec![1.0],
            p: 2.0,
            base_point: vec![1.0],
        };
        let (point, value) = crate::reference::grid_reference(
            |d| -residual_objective(&rp, d),
            &[(-1.0, 1.0)],
            1e-6,
        )
        .unwrap();
        assert!((point[0] - 1.0 / 6.0).abs() < 1e-5);
        assert!((-value - 1.0 / 12.0).abs() < 1e-10);
    }

    #[test]
    fn nu_grid_arithmetic() {
        // ‖x0‖_4^4 = 1024 with x0 on 16 coordinates.
        let x0 = vec![(1024.0_f64 / 16.0).powf(0.25); 16];
        let g = nu_grid(&x0, 4.0, 16, 1.0).unwrap();
        assert_eq!((g.lo_exponent, g.hi_exponent), (4, 10));
        assert_eq!(g.len(), 7);

        let x1 = vec![2.0, 2.0]; // ‖x‖_2^2 = 8
        let g1 = nu_grid(&x1, 2.0, 2, 1.0).unwrap();
        assert_eq!((g1.lo_exponent, g1.hi_exponent), (1, 3));

        let x2 = vec![0.5, 0.5, 0.5, 0.5]; // ‖x‖_2^2 = 1
        let g2 = nu_grid(&x2, 2.0, 4, 1e-3).unwrap();
        assert_eq!((g2.lo_exponent, g2.hi_exponent), (-13, 0));
    }

    #[test]
    fn nu_grid_empty_for_zero_start() {
        assert!(matches!(
            nu_grid(&[0.0, 0.0], 2.0, 2, 0.5),
            Err(SolveError::EmptyGrid)
        ));
    }

    #[test]
    fn line_search_reaches_quadratic_minimum() {
        // minimize (1 − t)² + (2 − t)²: t* = 1.5.
        let t = line_search_scale(&[1.0, 2.0], &[1.0, 1.0], 2.0);
        assert!((t - 1.5).abs() < 1e-9);
        // Ascent direction gives a zero step.
        assert_eq!(line_search_scale(&[1.0, 2.0], &[-1.0, -1.0], 2.0), 0.0);
    }

    #[test]
    fn refine_at_p2_matches_least_squares() {
        // One constraint, three variables; the exact optimum is the
        // projection of the origin onto the affine set.
        let a = SparseMatrix::from_dense(&[vec![1.0, 1.0, 1.0]]).unwrap();
        let problem = ConstrainedProblem::new(a, vec![3.0], 2.0).unwrap();
        let x0 = vec![3.0, 0.0, 0.0];
        let cfg = OracleConfig::exact2();
        let (x, report) = refine(&problem, &x0, 2.0, 1e-8, 2.0, &cfg).unwrap();
        let reference = problem.feasible_point(1e-12).unwrap();
        let got = knorm(&x, 2.0);
        let want = knorm(&reference, 2.0);
        assert!(
            (got - want).abs() <= 1e-8 * want,
            "objective {got} vs reference {want}"
        );
        assert!(report.oracle_calls >= 1);
        // Monotone trace.
        for w in report.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs());
        }
    }

    #[test]
    fn refine_returns_singleton_unchanged() {
        let a = SparseMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let problem = ConstrainedProblem::new(a, vec![1.0, 2.0], 4.0).unwrap();
        let x0 = vec![1.0, 2.0];
        let cfg = OracleConfig::exact2();
        let (x, _) = refine(&problem, &x0, 4.0, 0.5, 2.0, &cfg).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-9 && (x[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn refine_zero_start_returns_immediately() {
        let a = SparseMatrix::from_dense(&[vec![1.0, -1.0]]).unwrap();
        let problem = ConstrainedProblem::new(a, vec![0.0], 2.0).unwrap();
        let (x, report) = refine(
            &problem,
            &[0.0, 0.0],
            2.0,
            0.5,
            2.0,
            &OracleConfig::exact2(),
        )
        .unwrap();
        assert_eq!(x, vec![0.0, 0.0]);
        assert_eq!(report.iterations, 0);
    }
}
