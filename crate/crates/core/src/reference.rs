//! Independent brute-force minimizers used to certify optima.
//!
//! Nothing here shares step logic with the production oracles: the affine
//! constraint is eliminated through a dense nullspace basis computed by
//! Gaussian elimination, and the reduced problem is minimized by a damped
//! Newton method with its own dense factorization. These routines are slow
//! by design and capped at 300 variables.

use crate::error::SolveError;
use crate::linalg::SparseMatrix;
use crate::model::ModelError;
use crate::vec_ops::{abs_pow, dot, norm_inf, signed_pow};

/// Objectives the reference minimizer understands. All of them are convex
/// with diagonal Hessians.
#[derive(Debug, Clone)]
pub enum Objective {
    /// `Σ |x_e|^p`
    PNorm { p: f64 },
    /// `Σ r_e x_e² + s ‖x‖_q^q`
    Smoothed { r: Vec<f64>, s: f64, q: f64 },
    /// `gᵀx + 2 Σ r_e x_e² + s ‖x‖_q^q`
    GradSmoothed { g: Vec<f64>, r: Vec<f64>, s: f64, q: f64 },
    /// `−gᵀx + 2 Σ r_e x_e² + ‖x‖_p^p`, i.e. the negated residual model;
    /// minimizing this maximizes the residual objective.
    NegResidual { g: Vec<f64>, r: Vec<f64>, p: f64 },
    /// `Σ γ_q(t_e, x_e)` with the quadratically smoothed power function.
    Gamma { t: Vec<f64>, q: f64 },
}

impl Objective {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Self::PNorm { p } => x.iter().map(|&v| abs_pow(v, *p)).sum(),
            Self::Smoothed { r, s, q } => {
                let quad: f64 = r.iter().zip(x).map(|(&re, &v)| re * v * v).sum();
                let norm: f64 = x.iter().map(|&v| abs_pow(v, *q)).sum();
                quad + s * norm
            }
            Self::GradSmoothed { g, r, s, q } => {
                let quad: f64 = r.iter().zip(x).map(|(&re, &v)| re * v * v).sum();
                let norm: f64 = x.iter().map(|&v| abs_pow(v, *q)).sum();
                dot(g, x) + 2.0 * quad + s * norm
            }
            Self::NegResidual { g, r, p } => {
                let quad: f64 = r.iter().zip(x).map(|(&re, &v)| re * v * v).sum();
                let norm: f64 = x.iter().map(|&v| abs_pow(v, *p)).sum();
                -dot(g, x) + 2.0 * quad + norm
            }
            Self::Gamma { t, q } => t
                .iter()
                .zip(x)
                .map(|(&te, &v)| crate::reduction::gamma_q_scalar(*q, te, v))
                .sum(),
        }
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::PNorm { p } => x.iter().map(|&v| *p * signed_pow(v, *p - 1.0)).collect(),
            Self::Smoothed { r, s, q } => x
                .iter()
                .enumerate()
                .map(|(e, &v)| 2.0 * r[e] * v + s * *q * signed_pow(v, *q - 1.0))
                .collect(),
            Self::GradSmoothed { g, r, s, q } => x
                .iter()
                .enumerate()
                .map(|(e, &v)| g[e] + 4.0 * r[e] * v + s * *q * signed_pow(v, *q - 1.0))
                .collect(),
            Self::NegResidual { g, r, p } => x
                .iter()
                .enumerate()
                .map(|(e, &v)| -g[e] + 4.0 * r[e] * v + *p * signed_pow(v, *p - 1.0))
                .collect(),
            Self::Gamma { t, q } => x
                .iter()
                .enumerate()
                .map(|(e, &v)| {
                    if v.abs() <= t[e] {
                        *q * abs_pow(t[e], *q - 2.0) * v
                    } else {
                        *q * signed_pow(v, *q - 1.0)
                    }
                })
                .collect(),
        }
    }

    fn hessian_diag(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::PNorm { p } => x
                .iter()
                .map(|&v| *p * (*p - 1.0) * abs_pow(v, *p - 2.0))
                .collect(),
            Self::Smoothed { r, s, q } => x
                .iter()
                .enumerate()
                .map(|(e, &v)| 2.0 * r[e] + s * *q * (*q - 1.0) * abs_pow(v, *q - 2.0))
                .collect(),
            Self::GradSmoothed { g: _, r, s, q } => x
                .iter()
                .enumerate()
                .map(|(e, &v)| 4.0 * r[e] + s * *q * (*q - 1.0) * abs_pow(v, *q - 2.0))
                .collect(),
            Self::NegResidual { g: _, r, p } => x
                .iter()
                .enumerate()
                .map(|(e, &v)| 4.0 * r[e] + *p * (*p - 1.0) * abs_pow(v, *p - 2.0))
                .collect(),
            Self::Gamma { t, q } => x
                .iter()
                .enumerate()
                .map(|(e, &v)| {
                    if v.abs() <= t[e] {
                        *q * abs_pow(t[e], *q - 2.0)
                    } else {
                        *q * (*q - 1.0) * abs_pow(v, *q - 2.0)
                    }
                })
                .collect(),
        }
    }
}

/// Minimize `objective` over `{x : Ax = b}` by long-horizon damped Newton
/// in nullspace coordinates, down to a projected-gradient norm of
/// `tolerance · (1 + |value|)`.
pub fn dense_reference(
    objective: &Objective,
    a: &SparseMatrix,
    b: &[f64],
    tolerance: f64,
) -> Result<Vec<f64>, SolveError> {
    let m = a.cols();
    if m > 300 {
        return Err(SolveError::Model(ModelError::DimensionMismatch(
            "reference minimizer is capped at 300 variables",
        )));
    }
    let (x0, basis) = affine_parametrization(a, b)?;
    if basis.is_empty() {
        return Ok(x0);
    }
    let dim = basis.len();

    let mut y = vec![0.0; dim];
    let assemble = |y: &[f64]| -> Vec<f64> {
        let mut x = x0.clone();
        for (j, col) in basis.iter().enumerate() {
            for e in 0..m {
                x[e] += col[e] * y[j];
            }
        }
        x
    };

    let mut lambda = 0.0_f64;
    let mut stalled = 0u32;
    for _ in 0..2000 {
        let x = assemble(&y);
        let fx = objective.value(&x);
        let grad_x = objective.gradient(&x);
        let grad_y: Vec<f64> = basis.iter().map(|col| dot(col, &grad_x)).collect();
        if norm_inf(&grad_y) <= tolerance * (1.0 + fx.abs()) {
            return Ok(x);
        }

        let h = objective.hessian_diag(&x);
        // Reduced Hessian  Bᵀ diag(h) B, dense and small.
        let mut hy = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in i..dim {
                let mut v = 0.0;
                for e in 0..m {
                    v += basis[i][e] * h[e] * basis[j][e];
                }
                hy[i * dim + j] = v;
                hy[j * dim + i] = v;
            }
        }
        let trace: f64 = (0..dim).map(|i| hy[i * dim + i]).sum();
        let step = loop {
            let mut reg = hy.clone();
            let boost = lambda.max(1e-14 * trace.max(1.0));
            for i in 0..dim {
                reg[i * dim + i] += boost;
            }
            match dense_cholesky_solve(&mut reg, dim, &grad_y) {
                Some(d) => break d,
                None => {
                    lambda = (lambda.max(1e-12 * trace.max(1.0))) * 10.0;
                    if lambda > 1e30 {
                        return Err(SolveError::NoConvergence);
                    }
                }
            }
        };

        // Backtracking with a hard floor on the step scale.
        let slope: f64 = -dot(&step, &grad_y);
        let mut t = 1.0_f64;
        let mut accepted = false;
        while t >= 2f64.powi(-60) {
            let y_try: Vec<f64> = y.iter().zip(&step).map(|(&yi, &si)| yi - t * si).collect();
            let f_try = objective.value(&assemble(&y_try));
            if f_try <= fx + 1e-4 * t * slope {
                // Stop once decreases vanish into rounding error: the point
                // is as converged as double precision allows.
                if fx - f_try <= 1e-15 * (1.0 + fx.abs()) {
                    stalled += 1;
                    if stalled >= 3 {
                        return Ok(assemble(&y_try));
                    }
                } else {
                    stalled = 0;
                }
                y = y_try;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // No descent even at the floor: accept stationarity if the
            // gradient is merely small, otherwise raise the damping.
            if norm_inf(&grad_y) <= tolerance.sqrt() * (1.0 + fx.abs()) {
                return Ok(assemble(&y));
            }
            lambda = (lambda.max(1e-12 * trace.max(1.0))) * 100.0;
            if lambda > 1e30 {
                return Err(SolveError::NoConvergence);
            }
        } else {
            lambda *= 0.25;
        }
    }
    Err(SolveError::NoConvergence)
}

/// Particular solution and orthonormal nullspace basis of `Ax = b`,
/// computed by dense Gaussian elimination with partial pivoting.
fn affine_parametrization(
    a: &SparseMatrix,
    b: &[f64],
) -> Result<(Vec<f64>, Vec<Vec<f64>>), SolveError> {
    let (n, m) = (a.rows(), a.cols());
    if b.len() != n {
        return Err(SolveError::Model(ModelError::DimensionMismatch("A rows vs b length")));
    }
    let mut tab = vec![vec![0.0; m + 1]; n];
    for &(r, c, v) in a.entries() {
        tab[r][c] = v;
    }
    for (row, &bi) in tab.iter_mut().zip(b) {
        row[m] = bi;
    }

    let scale = tab
        .iter()
        .flat_map(|row| row[..m].iter())
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
        .max(1.0);
    let tol = 1e-12 * scale;

    // Gauss-Jordan with complete pivoting: always eliminate on the largest
    // remaining entry so near-zero coefficients never produce gigantic
    // particular solutions or skewed basis vectors.
    let mut pivot_cols: Vec<usize> = Vec::new();
    let mut is_pivot = vec![false; m];
    let mut row = 0;
    while row < n {
        let mut best = (row, usize::MAX, 0.0_f64);
        for (i, trow) in tab.iter().enumerate().take(n).skip(row) {
            for (col, &v) in trow[..m].iter().enumerate() {
                if !is_pivot[col] && v.abs() > best.2 {
                    best = (i, col, v.abs());
                }
            }
        }
        let (bi, col, best_val) = best;
        if best_val <= tol {
            break;
        }
        tab.swap(row, bi);
        let piv = tab[row][col];
        for v in tab[row].iter_mut() {
            *v /= piv;
        }
        for i in 0..n {
            if i != row && tab[i][col] != 0.0 {
                let f = tab[i][col];
                #[allow(clippy::needless_range_loop)]
                for j in 0..=m {
                    tab[i][j] -= f * tab[row][j];
                }
            }
        }
        pivot_cols.push(col);
        is_pivot[col] = true;
        row += 1;
    }
    // Rows reduced to zero must have a zero right-hand side.
    let rhs_scale = b.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    for tr in tab.iter().skip(row) {
        if tr[m].abs() > 1e-9 * rhs_scale {
            return Err(SolveError::Model(ModelError::InfeasibleRhs { residual: tr[m].abs() }));
        }
    }

    let mut x0 = vec![0.0; m];
    for (r, &pc) in pivot_cols.iter().enumerate() {
        x0[pc] = tab[r][m];
    }

    let mut basis = Vec::new();
    for free in 0..m {
        if is_pivot[free] {
            continue;
        }
        let mut v = vec![0.0; m];
        v[free] = 1.0;
        for (r, &pc) in pivot_cols.iter().enumerate() {
            v[pc] = -tab[r][free];
        }
        basis.push(v);
    }
    // Orthonormalize for conditioning (modified Gram-Schmidt).
    let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(basis.len());
    for mut v in basis {
        for u in &ortho {
            let c = dot(&v, u);
            for (ve, &ue) in v.iter_mut().zip(u.iter()) {
                *ve -= c * ue;
            }
        }
        let nrm = dot(&v, &v).sqrt();
        if nrm > 1e-12 {
            for ve in &mut v {
                *ve /= nrm;
            }
            ortho.push(v);
        }
    }
    Ok((x0, ortho))
}

/// Plain dense Cholesky solve; `None` when the matrix is not positive
/// definite. Distinct from the pivoted sparse-Schur code in `linalg`.
fn dense_cholesky_solve(mat: &mut [f64], n: usize, rhs: &[f64]) -> Option<Vec<f64>> {
    for j in 0..n {
        let mut d = mat[j * n + j];
        for k in 0..j {
            d -= mat[j * n + k] * mat[j * n + k];
        }
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        let ljj = d.sqrt();
        mat[j * n + j] = ljj;
        for i in j + 1..n {
            let mut v = mat[i * n + j];
            for k in 0..j {
                v -= mat[i * n + k] * mat[j * n + k];
            }
            mat[i * n + j] = v / ljj;
        }
    }
    let mut z = rhs.to_vec();
    for i in 0..n {
        for k in 0..i {
            z[i] -= mat[i * n + k] * z[k];
        }
        z[i] /= mat[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            z[i] -= mat[k * n + i] * z[k];
        }
        z[i] /= mat[i * n + i];
    }
    Some(z)
}

/// Exhaustive lattice scan over a box; returns the grid point with the
/// smallest `f` value. Limited to three dimensions.
pub fn grid_reference<F: Fn(&[f64]) -> f64>(
    f: F,
    bounds: &[(f64, f64)],
    step: f64,
) -> Result<(Vec<f64>, f64), SolveError> {
    if bounds.is_empty() || bounds.len() > 3 {
        return Err(SolveError::Model(ModelError::DimensionMismatch(
            "grid search supports 1 to 3 dimensions",
        )));
    }
    if step <= 0.0 {
        return Err(SolveError::Model(ModelError::DimensionMismatch("step must be positive")));
    }
    for &(lo, hi) in bounds {
        if lo > hi {
            return Err(SolveError::Model(ModelError::DimensionMismatch(
                "degenerate box: lo > hi",
            )));
        }
    }
    let counts: Vec<usize> = bounds
        .iter()
        .map(|&(lo, hi)| ((hi - lo) / step).floor() as usize + 1)
        .collect();
    let mut best_point = Vec::new();
    let mut best_value = f64::INFINITY;
    let mut idx = vec![0usize; bounds.len()];
    let mut point = vec![0.0; bounds.len()];
    loop {
        for (d, &i) in idx.iter().enumerate() {
            point[d] = (bounds[d].0 + i as f64 * step).min(bounds[d].1);
        }
        let v = f(&point);
        if v < best_value {
            best_value = v;
            best_point = point.clone();
        }
        // Odometer increment.
        let mut d = 0;
        loop {
            idx[d] += 1;
            if idx[d] < counts[d] {
                break;
            }
            idx[d] = 0;
            d += 1;
            if d == bounds.len() {
                return Ok((best_point, best_value));
            }
        }
    }
}

/// Exact minimum congestion for a single-commodity demand on an undirected
/// unit-capacity graph: `|demand| / maxflow`, with the max-flow computed by
/// breadth-first augmenting paths on the doubled directed graph.
pub fn min_congestion_reference(
    vertex_count: usize,
    edges: &[(usize, usize)],
    demands: &[f64],
) -> Result<f64, SolveError> {
    if demands.len() != vertex_count {
        return Err(SolveError::Model(ModelError::DimensionMismatch(
            "demand length vs vertex count",
        )));
    }
    let mut source = None;
    let mut sink = None;
    let mut volume = 0.0;
    for (v, &d) in demands.iter().enumerate() {
        if d > 1e-12 {
            if source.is_some() {
                return Err(SolveError::Model(ModelError::DimensionMismatch(
                    "more than one source vertex",
                )));
            }
            source = Some(v);
            volume = d;
        } else if d < -1e-12 {
            if sink.is_some() {
                return Err(SolveError::Model(ModelError::DimensionMismatch(
                    "more than one sink vertex",
                )));
            }
            sink = Some(v);
        }
    }
    let (s, t) = match (source, sink) {
        (Some(s), Some(t)) => (s, t),
        _ => return Ok(0.0),
    };

    // Residual capacities on the doubled arcs.
    let mut cap: Vec<[i64; 2]> = edges.iter().map(|_| [1, 1]).collect();
    let mut adj = vec![Vec::new(); vertex_count];
    for (e, &(u, v)) in edges.iter().enumerate() {
        adj[u].push((e, 0usize, v));
        adj[v].push((e, 1usize, u));
    }
    let mut flow_units: i64 = 0;
    loop {
        let mut prev: Vec<Option<(usize, usize, usize)>> = vec![None; vertex_count];
        let mut queue = std::collections::VecDeque::from([s]);
        let mut seen = vec![false; vertex_count];
        seen[s] = true;
        while let Some(u) = queue.pop_front() {
            for &(e, dir, v) in &adj[u] {
                if !seen[v] && cap[e][dir] > 0 {
                    seen[v] = true;
                    prev[v] = Some((e, dir, u));
                    queue.push_back(v);
                }
            }
        }
        if !seen[t] {
            break;
        }
        let mut v = t;
        while v != s {
            let (e, dir, u) = prev[v].unwrap();
            cap[e][dir] -= 1;
            cap[e][1 - dir] += 1;
            v = u;
        }
        flow_units += 1;
    }
    if flow_units == 0 {
        return Err(SolveError::OracleFailure(
            "demand endpoints are disconnected".into(),
        ));
    }
    Ok(volume / flow_units as f64)
}
