//! Browser bindings for the flow solver: parse a graph from the edge-list
//! text format, solve, and hand JSON back to the page. Three operations are
//! exposed: a single `p`-norm flow solve, the `(1+δ)`-approximate max-flow,
//! and a congestion sweep across a range of exponents.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use pnorm_core::flows::{
    approx_maxflow, congestion, maxflow_exponent, parse_graph, solve_flow, FlowInstance,
};
use pnorm_core::model::pnorm_objective;
use pnorm_core::reference::min_congestion_reference;
use pnorm_core::OracleConfig;

#[derive(Serialize)]
struct GraphView {
    vertex_count: usize,
    edges: Vec<(usize, usize)>,
    demands: Vec<f64>,
}

impl GraphView {
    fn of(instance: &FlowInstance) -> Self {
        Self {
            vertex_count: instance.vertex_count,
            edges: instance.edges.clone(),
            demands: instance.demands.clone(),
        }
    }
}

#[derive(Serialize)]
struct FlowOutcome {
    graph: GraphView,
    p: f64,
    flows: Vec<f64>,
    congestion: f64,
    objective: f64,
    iterations: usize,
    oracle_calls: usize,
    /// Exact minimum congestion when the demand is single-commodity.
    min_congestion: Option<f64>,
}

#[derive(Serialize)]
struct SweepPoint {
    p: f64,
    congestion: f64,
    objective: f64,
    flows: Vec<f64>,
}

#[derive(Serialize)]
struct SweepOutcome {
    graph: GraphView,
    points: Vec<SweepPoint>,
    min_congestion: Option<f64>,
}

fn exact_min_congestion(instance: &FlowInstance) -> Option<f64> {
    min_congestion_reference(instance.vertex_count, &instance.edges, &instance.demands).ok()
}

fn flow_outcome(
    instance: &FlowInstance,
    p: f64,
    flows: Vec<f64>,
    iterations: usize,
    oracle_calls: usize,
) -> Result<FlowOutcome, String> {
    let weighted: f64 = instance
        .weights
        .iter()
        .zip(&flows)
        .map(|(&w, &f)| w * f.abs().powf(p))
        .sum();
    Ok(FlowOutcome {
        graph: GraphView::of(instance),
        p,
        congestion: congestion(&flows),
        objective: weighted,
        iterations,
        oracle_calls,
        min_congestion: exact_min_congestion(instance),
        flows,
    })
}

pub fn flow_json(graph_text: &str, p: f64, eps: f64) -> Result<String, String> {
    if !(2.0..=128.0).contains(&p) {
        return Err(format!("p must lie in [2, 128], got {p}"));
    }
    let instance = parse_graph(graph_text).map_err(|e| e.to_string())?;
    let cfg = OracleConfig::exact2();
    let (flows, report) = solve_flow(&instance, p, eps.clamp(1e-9, 0.5), &cfg)
        .map_err(|e| e.to_string())?;
    let outcome = flow_outcome(&instance, p, flows, report.iterations, report.oracle_calls)?;
    serde_json::to_string(&outcome).map_err(|e| e.to_string())
}

pub fn maxflow_json(graph_text: &str, delta: f64) -> Result<String, String> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(format!("delta must lie in (0, 1), got {delta}"));
    }
    let instance = parse_graph(graph_text).map_err(|e| e.to_string())?;
    let cfg = OracleConfig::exact2();
    let (flows, report) = approx_maxflow(&instance, delta, &cfg).map_err(|e| e.to_string())?;
    let p = maxflow_exponent(instance.edge_count(), delta);
    let outcome = flow_outcome(&instance, p, flows, report.iterations, report.oracle_calls)?;
    serde_json::to_string(&outcome).map_err(|e| e.to_string())
}

pub fn sweep_json(graph_text: &str, p_max: f64, samples: usize) -> Result<String, String> {
    let instance = parse_graph(graph_text).map_err(|e| e.to_string())?;
    let p_max = p_max.clamp(2.0, 128.0);
    let samples = samples.clamp(2, 64);
    let cfg = OracleConfig::exact2();
    let mut points = Vec::with_capacity(samples);
    // Log-spaced exponents from 2 to p_max.
    let ratio = (p_max / 2.0).powf(1.0 / (samples as f64 - 1.0));
    for i in 0..samples {
        let p = 2.0 * ratio.powi(i as i32);
        let (flows, _) =
            solve_flow(&instance, p, 1e-4, &cfg).map_err(|e| format!("p={p}: {e}"))?;
        let objective = pnorm_objective(&flows, p).map_err(|e| e.to_string())?;
        points.push(SweepPoint { p, congestion: congestion(&flows), objective, flows });
    }
    let outcome = SweepOutcome {
        graph: GraphView::of(&instance),
        min_congestion: exact_min_congestion(&instance),
        points,
    };
    serde_json::to_string(&outcome).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = solveFlow)]
pub fn solve_flow_binding(graph_text: &str, p: f64, eps: f64) -> Result<String, JsValue> {
    flow_json(graph_text, p, eps).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = approxMaxflow)]
pub fn approx_maxflow_binding(graph_text: &str, delta: f64) -> Result<String, JsValue> {
    maxflow_json(graph_text, delta).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = congestionSweep)]
pub fn congestion_sweep_binding(
    graph_text: &str,
    p_max: f64,
    samples: usize,
) -> Result<String, JsValue> {
    sweep_json(graph_text, p_max, samples).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_ROUTE: &str = "p 3 3\ne 1 3\ne 1 2\ne 2 3\nd 1 1.0\nd 3 -1.0\n";

    #[test]
    fn flow_json_roundtrips() {
        let text = flow_json(TWO_ROUTE, 2.0, 1e-8).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let flows = v["flows"].as_array().unwrap();
        assert_eq!(flows.len(), 3);
        assert!((flows[0].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-6);
        assert!((v["min_congestion"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn maxflow_json_reports_exponent() {
        let text = maxflow_json(TWO_ROUTE, 0.1).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(v["p"].as_f64().unwrap() >= 2.0);
        assert!(v["congestion"].as_f64().unwrap() <= 0.55);
    }

    #[test]
    fn sweep_congestion_decreases_toward_min() {
        let text = sweep_json(TWO_ROUTE, 32.0, 6).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let points = v["points"].as_array().unwrap();
        assert_eq!(points.len(), 6);
        let first = points[0]["congestion"].as_f64().unwrap();
        let last = points[5]["congestion"].as_f64().unwrap();
        assert!(last <= first + 1e-9);
        assert!(last >= 0.5 - 1e-9);
    }

    #[test]
    fn bad_input_is_reported() {
        assert!(flow_json("p 2 1\ne 1 5\n", 2.0, 1e-6).is_err());
        assert!(maxflow_json(TWO_ROUTE, 1.5).is_err());
    }
}
