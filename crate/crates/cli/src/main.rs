//! `pnorm` — command-line front end for the lp-norm solver library.
//!
//! Exit codes: 0 on certified success, 1 on input errors, 2 when the
//! solver could not certify a solution.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pnorm_core::error::SolveError;
use pnorm_core::flows::{
    approx_maxflow, congestion, maxflow_exponent, parse_graph, solve_flow_with_q, write_flow,
    FlowError,
};
use pnorm_core::homotopy::solve_pnorm;
use pnorm_core::linalg::{read_matrix_market, read_vector, write_vector, LinalgError};
use pnorm_core::model::{pnorm_objective, ConstrainedProblem, SolveReport};
use pnorm_core::reference::{dense_reference, Objective};
use pnorm_core::{OracleConfig, SparseMatrix};

#[derive(Parser)]
#[command(
    name = "pnorm",
    version,
    about = "High-accuracy lp-norm regression, lp-norm flows, and approximate max-flow"
)]
struct Cli {
    /// Worker threads for the grid search (falls back to PNORM_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OracleChoice {
    /// Exact quadratic oracle (forces q = 2).
    Exact2,
    /// Damped Newton oracle for general q.
    Newton,
    /// Box-constrained oracle.
    Box,
}

impl OracleChoice {
    fn config(self) -> OracleConfig {
        match self {
            Self::Exact2 => OracleConfig::exact2(),
            Self::Newton => OracleConfig::newton(),
            Self::Box => OracleConfig::box_method(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve min ‖x‖_p^p subject to Ax = b.
    Regress {
        /// Constraint matrix in Matrix Market coordinate format.
        #[arg(long)]
        matrix: PathBuf,
        /// Right-hand side, one value per line.
        #[arg(long)]
        rhs: PathBuf,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        /// Smoothing exponent; default max(2, ⌈√log₂ m⌉).
        #[arg(long)]
        q: Option<f64>,
        #[arg(long, value_enum, default_value_t = OracleChoice::Exact2)]
        oracle: OracleChoice,
        /// Write the run report here as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write the solution here (one value per line) instead of stdout.
        #[arg(long)]
        solution: Option<PathBuf>,
    },
    /// Solve an lp-norm minimizing flow on an edge-list graph.
    Flow {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long, value_enum, default_value_t = OracleChoice::Exact2)]
        oracle: OracleChoice,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// (1+δ)-approximate minimum-congestion flow on unit capacities.
    Maxflow {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        delta: f64,
        #[arg(long, value_enum, default_value_t = OracleChoice::Exact2)]
        oracle: OracleChoice,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Benchmark oracle-call scaling over p and m grids; writes CSV.
    Bench {
        /// Comma-separated exponents, e.g. 4,8,16,32.
        #[arg(long, value_delimiter = ',')]
        p_list: Vec<f64>,
        /// Comma-separated variable counts, e.g. 64,128.
        #[arg(long, value_delimiter = ',')]
        m_list: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .or_else(|| {
            std::env::var("PNORM_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(1)
        .max(1);
    match run(cli.command, threads) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<LinalgError> for CliError {
    fn from(e: LinalgError) -> Self {
        Self::input(e.to_string())
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        let code = match &e {
            SolveError::Model(_) => 1,
            SolveError::Linalg(LinalgError::Parse { .. })
            | SolveError::Linalg(LinalgError::Io(_))
            | SolveError::Linalg(LinalgError::ShapeMismatch(_))
            | SolveError::Linalg(LinalgError::BadIndex { .. }) => 1,
            _ => 2,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<FlowError> for CliError {
    fn from(e: FlowError) -> Self {
        match e {
            FlowError::Solve(inner) => inner.into(),
            other => Self::input(other.to_string()),
        }
    }
}

/// Default smoothing exponent `max(2, ⌈√log₂ m⌉)`; the exact quadratic
/// oracle overrides any choice with 2.
fn pick_q(q_flag: Option<f64>, m: usize, oracle: OracleChoice) -> f64 {
    let q = q_flag.unwrap_or_else(|| (m.max(2) as f64).log2().sqrt().ceil().max(2.0));
    if oracle == OracleChoice::Exact2 && (q - 2.0).abs() > 1e-12 {
        eprintln!("warning: exact2 oracle forces q = 2 (requested q = {q})");
        return 2.0;
    }
    q.max(2.0)
}

fn write_report(report: &SolveReport, path: &Option<PathBuf>) -> Result<(), CliError> {
    if let Some(path) = path {
        fs::write(path, report.to_json())
            .map_err(|e| CliError::input(format!("cannot write report: {e}")))?;
    }
    Ok(())
}

fn run(command: Command, threads: usize) -> Result<(), CliError> {
    match command {
        Command::Regress { matrix, rhs, p, eps, q, oracle, report, solution } => {
            let a = read_matrix_market(&matrix)?;
            let b = read_vector(&rhs)?;
            let problem = ConstrainedProblem::new(a, b, p).map_err(SolveError::Model)?;
            problem.validate().map_err(SolveError::Model)?;
            let q = pick_q(q, problem.variables(), oracle);
            let cfg = oracle.config().with_threads(threads);
            let (x, run_report) = solve_pnorm(&problem, eps, q, &cfg)?;
            let objective = pnorm_objective(&x, p).map_err(SolveError::Model)?;
            match &solution {
                Some(path) => write_vector(&x, path)?,
                None => {
                    for v in &x {
                        println!("{v:.17e}");
                    }
                }
            }
            write_report(&run_report, &report)?;
            eprintln!(
                "objective {objective:.12e} in {} iterations, {} oracle calls",
                run_report.iterations, run_report.oracle_calls
            );
            Ok(())
        }
        Command::Flow { graph, p, eps, q, oracle, report } => {
            let text = fs::read_to_string(&graph)
                .map_err(|e| CliError::input(format!("cannot read graph: {e}")))?;
            let instance = parse_graph(&text)?;
            let q = pick_q(q, instance.edge_count(), oracle);
            let cfg = oracle.config().with_threads(threads);
            let (flow, run_report) = solve_flow_with_q(&instance, p, eps, q, &cfg)?;
            print!("{}", write_flow(&flow));
            write_report(&run_report, &report)?;
            let weighted: f64 = instance
                .weights
                .iter()
                .zip(&flow)
                .map(|(&w, &f)| w * f.abs().powf(p))
                .sum();
            eprintln!(
                "objective {weighted:.12e} in {} iterations, {} oracle calls",
                run_report.iterations, run_report.oracle_calls
            );
            Ok(())
        }
        Command::Maxflow { graph, delta, oracle, report } => {
            let text = fs::read_to_string(&graph)
                .map_err(|e| CliError::input(format!("cannot read graph: {e}")))?;
            let instance = parse_graph(&text)?;
            let cfg = oracle.config().with_threads(threads);
            let (flow, run_report) = approx_maxflow(&instance, delta, &cfg)?;
            let chosen_p = maxflow_exponent(instance.edge_count(), delta);
            print!("{}", write_flow(&flow));
            println!("c chosen-p {chosen_p}");
            println!("c congestion {:.12e}", congestion(&flow));
            write_report(&run_report, &report)?;
            Ok(())
        }
        Command::Bench { p_list, m_list, seed, eps, out } => {
            if p_list.is_empty() {
                return Err(CliError::input("empty --p-list"));
            }
            if m_list.is_empty() {
                return Err(CliError::input("empty --m-list"));
            }
            let csv = run_bench(&p_list, &m_list, seed, eps, threads)?;
            fs::write(&out, csv)
                .map_err(|e| CliError::input(format!("cannot write csv: {e}")))?;
            Ok(())
        }
    }
}

/// One seeded dense instance per m; columns are
/// `m,p,q,oracle_calls,iterations,wall_time,final_objective,reference_gap`.
fn run_bench(
    p_list: &[f64],
    m_list: &[usize],
    seed: u64,
    eps: f64,
    threads: usize,
) -> Result<String, CliError> {
    let mut csv =
        String::from("m,p,q,oracle_calls,iterations,wall_time,final_objective,reference_gap\n");
    for &m in m_list {
        let n = (m / 2).max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (m as u64).wrapping_mul(0x9e3779b9));
        let mut entries = Vec::with_capacity(n * m);
        for r in 0..n {
            for c in 0..m {
                entries.push((r, c, rng.random::<f64>() * 2.0 - 1.0));
            }
        }
        let a = SparseMatrix::new(n, m, entries)?;
        let z: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let b = a.matvec(&z)?;
        for &p in p_list {
            let problem =
                ConstrainedProblem::new(a.clone(), b.clone(), p).map_err(SolveError::Model)?;
            let cfg = OracleConfig::exact2().with_threads(threads);
            let started = Instant::now();
            let (x, report) = solve_pnorm(&problem, eps, 2.0, &cfg)?;
            let wall = started.elapsed().as_secs_f64();
            let objective = pnorm_objective(&x, p).map_err(SolveError::Model)?;
            let gap = if m <= 300 {
                let reference = dense_reference(&Objective::PNorm { p }, &a, &b, 1e-9)?;
                let opt = pnorm_objective(&reference, p).map_err(SolveError::Model)?;
                format!("{:.6e}", (objective - opt) / opt.max(1e-300))
            } else {
                String::new()
            };
            csv.push_str(&format!(
                "{m},{p},{q},{calls},{iters},{wall:.6},{objective:.12e},{gap}\n",
                q = 2.0,
                calls = report.oracle_calls,
                iters = report.iterations,
            ));
        }
    }
    Ok(csv)
}
