//! Graph front end: incidence matrices, `ℓp`-norm minimizing flows,
//! `(1+δ)`-approximate max-flow, and the edge-list text format.
//!
//! Input format (vertices are 1-indexed):
//!
//! ```text
//! p <vertices> <edges>
//! e <u> <v> [weight]
//! d <vertex> <value>
//! ```
//!
//! Lines starting with `c` or `#` are comments. Flow output is one
//! `f <edge-index> <value>` line per edge, 1-indexed in input order.

use std::fmt;

use crate::error::SolveError;
use crate::homotopy::solve_pnorm;
use crate::linalg::SparseMatrix;
use crate::model::{ConstrainedProblem, SolveReport};
use crate::oracle::OracleConfig;
use crate::vec_ops::norm_inf;

#[derive(Debug, Clone, PartialEq)]
pub enum FlowError {
    SelfLoop { edge: usize },
    BadVertex { vertex: usize, vertex_count: usize },
    /// Demands do not sum to zero within tolerance.
    UnbalancedDemands { sum: f64 },
    /// Some connected component carries a nonzero net demand, so the
    /// demands cannot be routed.
    DisconnectedDemand,
    Parse { line: usize, msg: String },
    Shape(&'static str),
    Solve(SolveError),
}

impl fmt::Display for FlowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SelfLoop { edge } => write!(f, "edge {edge} is a self-loop"),
            Self::BadVertex { vertex, vertex_count } => {
                write!(f, "vertex {vertex} outside 1..={vertex_count}")
            }
            Self::UnbalancedDemands { sum } => {
                write!(f, "demands sum to {sum:.3e}, expected zero")
            }
            Self::DisconnectedDemand => {
                write!(f, "demands are unroutable: a component has nonzero net demand")
            }
            Self::Parse { line, msg } => write!(f, "parse error on line {line}: {msg}"),
            Self::Shape(what) => write!(f, "invalid instance: {what}"),
            Self::Solve(e) => write!(f, "flow solve failed: {e}"),
        }
    }
}

impl std::error::Error for FlowError {}

impl From<SolveError> for FlowError {
    fn from(e: SolveError) -> Self {
        Self::Solve(e)
    }
}

/// An undirected flow instance: edge list, positive edge weights (all ones
/// for the unweighted problems), and per-vertex demands summing to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowInstance {
    pub vertex_count: usize,
    pub edges: Vec<(usize, usize)>,
    pub weights: Vec<f64>,
    pub demands: Vec<f64>,
}

impl FlowInstance {
    pub fn new(
        vertex_count: usize,
        edges: Vec<(usize, usize)>,
        weights: Vec<f64>,
        demands: Vec<f64>,
    ) -> Result<Self, FlowError> {
        if weights.len() != edges.len() {
            return Err(FlowError::Shape("one weight per edge required"));
        }
        if demands.len() != vertex_count {
            return Err(FlowError::Shape("one demand per vertex required"));
        }
        for (i, &(u, v)) in edges.iter().enumerate() {
            if u >= vertex_count || v >= vertex_count {
                return Err(FlowError::BadVertex {
                    vertex: u.max(v) + 1,
                    vertex_count,
                });
            }
            if u == v {
                return Err(FlowError::SelfLoop { edge: i + 1 });
            }
        }
        if weights.iter().any(|&w| w <= 0.0 || !w.is_finite()) {
            return Err(FlowError::Shape("edge weights must be positive and finite"));
        }
        let scale = demands.iter().map(|d| d.abs()).sum::<f64>();
        let total: f64 = demands.iter().sum();
        if total.abs() > 1e-9 * scale {
            return Err(FlowError::UnbalancedDemands { sum: total });
        }
        let instance = Self { vertex_count, edges, weights, demands };
        // Each component must carry zero net demand to be routable.
        let comp = instance.components();
        let ncomp = comp.iter().max().map_or(0, |&c| c + 1);
        let mut per_comp = vec![0.0; ncomp];
        for (v, &c) in comp.iter().enumerate() {
            per_comp[c] += instance.demands[v];
        }
        if per_comp.iter().any(|s| s.abs() > 1e-9 * scale.max(1e-300)) {
            return Err(FlowError::DisconnectedDemand);
        }
        Ok(instance)
    }

    /// Unweighted (unit-weight) instance.
    pub fn unit(
        vertex_count: usize,
        edges: Vec<(usize, usize)>,
        demands: Vec<f64>,
    ) -> Result<Self, FlowError> {
        let weights = vec![1.0; edges.len()];
        Self::new(vertex_count, edges, weights, demands)
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_unit_weight(&self) -> bool {
        self.weights.iter().all(|&w| w == 1.0)
    }

    /// Connected component id per vertex.
    fn components(&self) -> Vec<usize> {
        let mut adj = vec![Vec::new(); self.vertex_count];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut comp = vec![usize::MAX; self.vertex_count];
        let mut next = 0;
        for start in 0..self.vertex_count {
            if comp[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            comp[start] = next;
            while let Some(u) = stack.pop() {
                for &v in &adj[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = next;
                        stack.push(v);
                    }
                }
            }
            next += 1;
        }
        comp
    }
}

/// Vertex-edge constraint matrix: one column per edge with `+1` at the
/// tail and `−1` at the head, with one redundant row (the smallest-index
/// vertex of each connected component) dropped so the rows are linearly
/// independent.
pub fn incidence(instance: &FlowInstance) -> Result<SparseMatrix, FlowError> {
    let (matrix, _) = reduced_incidence(instance)?;
    Ok(matrix)
}

/// Unreduced vertex-edge matrix; every column sums to zero.
pub fn incidence_full(instance: &FlowInstance) -> Result<SparseMatrix, FlowError> {
    let mut entries = Vec::with_capacity(2 * instance.edges.len());
    for (e, &(u, v)) in instance.edges.iter().enumerate() {
        entries.push((u, e, 1.0));
        entries.push((v, e, -1.0));
    }
    SparseMatrix::new(instance.vertex_count, instance.edge_count(), entries)
        .map_err(|_| FlowError::Shape("incidence assembly failed"))
}

/// Reduced incidence matrix plus the kept vertex rows in order.
fn reduced_incidence(instance: &FlowInstance) -> Result<(SparseMatrix, Vec<usize>), FlowError> {
    let full = incidence_full(instance)?;
    let comp = instance.components();
    let mut drop = vec![false; instance.vertex_count];
    let mut seen = vec![false; comp.iter().max().map_or(0, |&c| c + 1)];
    for v in 0..instance.vertex_count {
        if !seen[comp[v]] {
            seen[comp[v]] = true;
            drop[v] = true;
        }
    }
    let keep: Vec<usize> = (0..instance.vertex_count).filter(|&v| !drop[v]).collect();
    let reduced = full
        .select_rows(&keep)
        .map_err(|_| FlowError::Shape("row reduction failed"))?;
    Ok((reduced, keep))
}

/// Minimize `Σ_e w_e |f_e|^p` over flows routing the demands. Weighted
/// instances reduce to the unweighted solver through the substitution
/// `x_e = w_e^{1/p} f_e`, which scales each constraint column by
/// `w_e^{−1/p}`.
pub fn solve_flow(
    instance: &FlowInstance,
    p: f64,
    eps: f64,
    cfg: &OracleConfig,
) -> Result<(Vec<f64>, SolveReport), FlowError> {
    solve_flow_with_q(instance, p, eps, default_flow_q(instance.edge_count(), cfg), cfg)
}

/// [`solve_flow`] with an explicit smoothing exponent `q`.
pub fn solve_flow_with_q(
    instance: &FlowInstance,
    p: f64,
    eps: f64,
    q: f64,
    cfg: &OracleConfig,
) -> Result<(Vec<f64>, SolveReport), FlowError> {
    let (reduced, kept) = reduced_incidence(instance)?;
    let b: Vec<f64> = kept.iter().map(|&v| instance.demands[v]).collect();

    let col_scale: Vec<f64> = instance.weights.iter().map(|&w| w.powf(-1.0 / p)).collect();
    let a = reduced
        .scale_cols(&col_scale)
        .map_err(|_| FlowError::Shape("weight scaling failed"))?;
    let problem = ConstrainedProblem::new(a, b, p).map_err(SolveError::Model)?;

    let (x, report) = solve_pnorm(&problem, eps, q, cfg)?;
    let flow: Vec<f64> = x.iter().zip(&col_scale).map(|(&xe, &se)| xe * se).collect();
    Ok((flow, report))
}

/// Exponent used by the max-flow reduction: the smallest integer `p` with
/// `(2m)^{1/p} ≤ 1 + δ`.
pub fn maxflow_exponent(edge_count: usize, delta: f64) -> f64 {
    let p = ((2.0 * edge_count as f64).ln() / (1.0 + delta).ln()).ceil();
    p.max(2.0)
}

/// `(1+δ)`-approximate minimum-congestion flow on a unit-capacity
/// instance: solve the `p`-norm flow at `p = ⌈log(2m)/log(1+δ)⌉` and
/// accuracy `δ/4`.
pub fn approx_maxflow(
    instance: &FlowInstance,
    delta: f64,
    cfg: &OracleConfig,
) -> Result<(Vec<f64>, SolveReport), FlowError> {
    if !instance.is_unit_weight() {
        return Err(FlowError::Shape("approximate max-flow requires unit capacities"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(FlowError::Shape("delta must lie in (0, 1)"));
    }
    let p = maxflow_exponent(instance.edge_count(), delta);
    solve_flow(instance, p, delta / 4.0, cfg)
}

/// `‖f‖_∞`, the congestion of a flow.
pub fn congestion(flow: &[f64]) -> f64 {
    norm_inf(flow)
}

/// Default smoothing exponent for flow solves: `max(2, ⌈√log₂ m⌉)`,
/// forced to 2 by the exact quadratic oracle.
pub fn default_flow_q(edge_count: usize, cfg: &OracleConfig) -> f64 {
    let q = (edge_count.max(2) as f64).log2().sqrt().ceil().max(2.0);
    crate::residual::effective_q(cfg, q)
}

/// Parse the edge-list text format described in the module docs.
pub fn parse_graph(text: &str) -> Result<FlowInstance, FlowError> {
    let mut header: Option<(usize, usize)> = None;
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut demands: Vec<f64> = Vec::new();

    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let err = |msg: String| FlowError::Parse { line: no + 1, msg };
        if line.is_empty() || line.starts_with('c') || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks[0] {
            "p" => {
                if header.is_some() {
                    return Err(err("duplicate header line".into()));
                }
                if toks.len() != 3 {
                    return Err(err("expected 'p <vertices> <edges>'".into()));
                }
                let n: usize = toks[1].parse().map_err(|_| err("bad vertex count".into()))?;
                let m: usize = toks[2].parse().map_err(|_| err("bad edge count".into()))?;
                header = Some((n, m));
                demands = vec![0.0; n];
            }
            "e" => {
                let (n, _) = header.ok_or_else(|| err("edge before header".into()))?;
                if toks.len() != 3 && toks.len() != 4 {
                    return Err(err("expected 'e <u> <v> [weight]'".into()));
                }
                let u: usize = toks[1].parse().map_err(|_| err("bad endpoint".into()))?;
                let v: usize = toks[2].parse().map_err(|_| err("bad endpoint".into()))?;
                if u == 0 || v == 0 || u > n || v > n {
                    return Err(err(format!("endpoint outside 1..={n}")));
                }
                let w: f64 = match toks.get(3) {
                    Some(t) => t.parse().map_err(|_| err("bad weight".into()))?,
                    None => 1.0,
                };
                edges.push((u - 1, v - 1));
                weights.push(w);
            }
            "d" => {
                let (n, _) = header.ok_or_else(|| err("demand before header".into()))?;
                if toks.len() != 3 {
                    return Err(err("expected 'd <vertex> <value>'".into()));
                }
                let v: usize = toks[1].parse().map_err(|_| err("bad vertex".into()))?;
                if v == 0 || v > n {
                    return Err(err(format!("vertex outside 1..={n}")));
                }
                let value: f64 = toks[2].parse().map_err(|_| err("bad demand value".into()))?;
                demands[v - 1] += value;
            }
            other => return Err(err(format!("unknown line tag '{other}'"))),
        }
    }

    let (n, m) = header.ok_or(FlowError::Parse { line: 1, msg: "missing header".into() })?;
    if edges.len() != m {
        return Err(FlowError::Parse {
            line: 1,
            msg: format!("header declares {m} edges, found {}", edges.len()),
        });
    }
    FlowInstance::new(n, edges, weights, demands)
}

/// Flow output: one `f <edge-index> <value>` line per edge.
pub fn write_flow(flow: &[f64]) -> String {
    let mut out = String::new();
    for (e, v) in flow.iter().enumerate() {
        out.push_str(&format!("f {} {:.12e}\n", e + 1, v));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct edge s→t plus the two-edge path s→a→t, unit demand.
    pub(crate) fn two_route() -> FlowInstance {
        FlowInstance::unit(3, vec![(0, 2), (0, 1), (1, 2)], vec![1.0, 0.0, -1.0]).unwrap()
    }

    #[test]
    fn incidence_single_edge_column() {
        let inst = FlowInstance::unit(2, vec![(0, 1)], vec![1.0, -1.0]).unwrap();
        let full = incidence_full(&inst).unwrap();
        assert_eq!(full.entries(), &[(0, 0, 1.0), (1, 0, -1.0)]);
    }

    #[test]
    fn incidence_triangle_columns_sum_to_zero() {
        let inst = FlowInstance::unit(3, vec![(0, 1), (1, 2), (2, 0)], vec![0.0; 3]).unwrap();
        let full = incidence_full(&inst).unwrap();
        assert_eq!(full.cols(), 3);
        let sums = full.matvec_t(&[1.0; 3]).unwrap();
        assert_eq!(sums, vec![0.0; 3]);
    }

    #[test]
    fn incidence_path_reduced_rank() {
        let inst = FlowInstance::unit(3, vec![(0, 1), (1, 2)], vec![0.0; 3]).unwrap();
        let reduced = incidence(&inst).unwrap();
        assert_eq!((reduced.rows(), reduced.cols()), (2, 2));
        // Full rank: both columns independent.
        let d = reduced.to_dense();
        let det = d[0][0] * d[1][1] - d[0][1] * d[1][0];
        assert!(det.abs() > 1e-12);
    }

    #[test]
    fn self_loop_rejected() {
        let got = FlowInstance::unit(2, vec![(1, 1)], vec![0.0, 0.0]);
        assert!(matches!(got, Err(FlowError::SelfLoop { edge: 1 })));
    }

    #[test]
    fn unbalanced_demands_rejected() {
        let got = FlowInstance::unit(2, vec![(0, 1)], vec![1.0, -0.5]);
        assert!(matches!(got, Err(FlowError::UnbalancedDemands { .. })));
    }

    #[test]
    fn disconnected_demand_rejected() {
        // Demand between two components, balanced globally.
        let got = FlowInstance::unit(4, vec![(0, 1), (2, 3)], vec![1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(got, Err(FlowError::DisconnectedDemand)));
    }

    #[test]
    fn path_graph_unique_flow() {
        let inst = FlowInstance::unit(3, vec![(0, 1), (1, 2)], vec![1.0, 0.0, -1.0]).unwrap();
        for p in [2.0, 4.0, 8.0] {
            let (f, _) = solve_flow(&inst, p, 0.25, &OracleConfig::exact2()).unwrap();
            assert!((f[0] - 1.0).abs() < 1e-7 && (f[1] - 1.0).abs() < 1e-7, "p={p}: {f:?}");
        }
    }

    #[test]
    fn two_route_electrical_split() {
        let inst = two_route();
        let (f, _) = solve_flow(&inst, 2.0, 1e-9, &OracleConfig::exact2()).unwrap();
        assert!((f[0] - 2.0 / 3.0).abs() < 1e-7, "direct-edge flow {}", f[0]);
    }

    #[test]
    fn weighted_flow_reduces_to_unweighted() {
        // Doubling the direct edge's weight at p = 2 moves its share from
        // 2/3 to 1/2: stationarity 2w₁f = 2(1−f)·2 with weights (2,1,1).
        let inst = FlowInstance::new(
            3,
            vec![(0, 2), (0, 1), (1, 2)],
            vec![2.0, 1.0, 1.0],
            vec![1.0, 0.0, -1.0],
        )
        .unwrap();
        let (f, _) = solve_flow(&inst, 2.0, 1e-9, &OracleConfig::exact2()).unwrap();
        assert!((f[0] - 0.5).abs() < 1e-7, "direct-edge flow {}", f[0]);
    }

    #[test]
    fn conservation_on_outputs() {
        let inst = two_route();
        let (f, _) = solve_flow(&inst, 4.0, 1e-3, &OracleConfig::exact2()).unwrap();
        let full = incidence_full(&inst).unwrap();
        let net = full.matvec(&f).unwrap();
        for (got, want) in net.iter().zip(&inst.demands) {
            assert!((got - want).abs() <= 1e-7 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn maxflow_single_edge() {
        let inst = FlowInstance::unit(2, vec![(0, 1)], vec![1.0, -1.0]).unwrap();
        let (f, _) = approx_maxflow(&inst, 0.5, &OracleConfig::exact2()).unwrap();
        assert!((f[0] - 1.0).abs() < 1e-9);
        assert!((congestion(&f) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn maxflow_parallel_routes() {
        // Two parallel unit edges: optimal congestion 0.5.
        let inst = FlowInstance::unit(2, vec![(0, 1), (0, 1)], vec![1.0, -1.0]).unwrap();
        let (f, _) = approx_maxflow(&inst, 0.1, &OracleConfig::exact2()).unwrap();
        assert!(congestion(&f) <= 0.55, "congestion {}", congestion(&f));
    }

    #[test]
    fn maxflow_four_cycle() {
        // Unit demand between opposite corners: optimal congestion 1/2.
        let inst = FlowInstance::unit(
            4,
            vec![(0, 1), (1, 2), (2, 3), (3, 0)],
            vec![1.0, 0.0, -1.0, 0.0],
        )
        .unwrap();
        let delta = 0.1;
        let (f, _) = approx_maxflow(&inst, delta, &OracleConfig::exact2()).unwrap();
        assert!(
            congestion(&f) <= 0.5 * (1.0 + delta),
            "congestion {}",
            congestion(&f)
        );
    }

    #[test]
    fn maxflow_exponent_formula() {
        let p = maxflow_exponent(10, 0.1);
        assert!((2.0 * 10.0f64).powf(1.0 / p) <= 1.1 + 1e-12);
        assert_eq!(p, ((20.0f64).ln() / (1.1f64).ln()).ceil());
    }

    #[test]
    fn parse_and_emit_roundtrip() {
        let text = "c toy instance\n\
                    p 3 3\n\
                    e 1 3\n\
                    e 1 2 1.0\n\
                    e 2 3 1.0\n\
                    d 1 1.0\n\
                    d 3 -1.0\n";
        let inst = parse_graph(text).unwrap();
        assert_eq!(inst, two_route());
        let out = write_flow(&[1.0, 0.5, 0.5]);
        assert!(out.starts_with("f 1 1"));
        assert_eq!(out.lines().count(), 3);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "p 2 1\ne 1 5\n";
        match parse_graph(text) {
            Err(FlowError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
