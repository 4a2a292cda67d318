//! Browser bindings: run a small NR/FL comparison, evaluate the bounds and
//! inspect a graph's spectrum. Each export takes and returns JSON strings.
//! The `*_json` functions hold the logic and are also callable natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use netreg::analysis::BoundReport;
use netreg::experiment::{self, ExperimentConfig, RunOutput, TopologyConfig};
use netreg::graph;
use netreg::schemes::Scheme;

/// Keeps a single browser call to a few seconds.
pub const MAX_WORK: u64 = 2_000_000;

#[derive(Serialize)]
struct Curves {
    k: Vec<u64>,
    grad_norm_sq: Vec<f64>,
    grad_norm_sq_stderr: Vec<f64>,
    loss: Vec<f64>,
    vbar: Vec<f64>,
    trials_completed: usize,
}

impl Curves {
    fn of(o: &RunOutput) -> Self {
        let a = &o.aggregate;
        Self {
            k: a.rows.iter().map(|r| r.k).collect(),
            grad_norm_sq: a.mean_series(|r| r.grad_norm_sq),
            grad_norm_sq_stderr: a.stderr_series(|r| r.grad_norm_sq),
            loss: a.mean_series(|r| r.loss),
            vbar: a.mean_series(|r| r.vbar),
            trials_completed: o.summary.trials_completed,
        }
    }
}

#[derive(Serialize)]
struct CompareResult {
    nr: Curves,
    fl: Curves,
    nr_plateau_grad_norm_sq: Option<f64>,
    fl_plateau_grad_norm_sq: Option<f64>,
    bounds: BoundReport,
}

fn parse(config_json: &str) -> Result<ExperimentConfig, String> {
    let mut cfg = ExperimentConfig::from_json(config_json).map_err(|e| e.to_string())?;
    // No threads in the browser.
    cfg.workers = 1;
    Ok(cfg)
}

/// Runs NR and FL on the same traces and returns mean curves per scheme.
pub fn simulate_compare_json(config_json: &str) -> Result<String, String> {
    let mut cfg = parse(config_json)?;
    cfg.schemes = vec![Scheme::Nr, Scheme::Fl];
    let exp = cfg.resolve().map_err(|e| e.to_string())?;
    let work = exp.config.horizon.expected_ticks(exp.rates.total()) * cfg.trials as f64;
    if work > MAX_WORK as f64 {
        return Err(format!("ticks × trials = {work} exceeds the demo limit of {MAX_WORK}"));
    }
    let nr = experiment::execute(&exp, Scheme::Nr).map_err(|e| e.to_string())?;
    let fl = experiment::execute(&exp, Scheme::Fl).map_err(|e| e.to_string())?;
    let result = CompareResult {
        nr_plateau_grad_norm_sq: nr.summary.plateau_grad_norm_sq.map(|s| s.mean),
        fl_plateau_grad_norm_sq: fl.summary.plateau_grad_norm_sq.map(|s| s.mean),
        bounds: nr.summary.bounds.clone(),
        nr: Curves::of(&nr),
        fl: Curves::of(&fl),
    };
    serde_json::to_string(&result).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct CheckResult {
    report: BoundReport,
    verdicts: Vec<String>,
}

/// Bound constants and applicability verdicts for a configuration.
pub fn bound_report_json(config_json: &str) -> Result<String, String> {
    let cfg = parse(config_json)?;
    let report = experiment::check(&cfg).map_err(|e| e.to_string())?;
    let verdicts = experiment::check_verdicts(&report);
    serde_json::to_string(&CheckResult { report, verdicts }).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Spectrum {
    nodes: usize,
    edges: Vec<(usize, usize)>,
    eigenvalues: Vec<f64>,
    lambda2: f64,
    max_degree: usize,
}

/// Builds a topology (`complete`, `ring` or `watts_strogatz`) and returns its
/// edges and Laplacian spectrum.
pub fn graph_spectrum_json(kind: &str, n: usize, k: usize, beta: f64, seed: u64) -> Result<String, String> {
    let topo = match kind {
        "complete" => TopologyConfig::Complete,
        "ring" => TopologyConfig::Ring { k },
        "watts_strogatz" => TopologyConfig::WattsStrogatz { k, beta },
        other => return Err(format!("unknown topology `{other}`")),
    };
    if n > 200 {
        return Err("at most 200 nodes in the demo".into());
    }
    let g = topo.build(n, seed).map_err(|e| e.to_string())?;
    let s = graph::spectral(&g).map_err(|e| e.to_string())?;
    serde_json::to_string(&Spectrum {
        nodes: n,
        edges: g.edges(),
        eigenvalues: s.eigenvalues,
        lambda2: s.lambda2,
        max_degree: s.max_degree,
    })
    .map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn simulate_compare(config_json: &str) -> Result<String, JsError> {
    simulate_compare_json(config_json).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn bound_report(config_json: &str) -> Result<String, JsError> {
    bound_report_json(config_json).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn graph_spectrum(kind: &str, n: usize, k: usize, beta: f64, seed: u64) -> Result<String, JsError> {
    graph_spectrum_json(kind, n, k, beta, seed).map_err(|e| JsError::new(&e))
}
