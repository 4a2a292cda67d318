//! Multi-trial experiments: configuration, execution, aggregation and the
//! artifacts written by the command-line runner.

pub mod config;
pub mod plot;
pub mod runner;
pub mod summary;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{bound_report, BoundReport};
use crate::error::{Error, Result};
use crate::schemes::Scheme;

pub use config::{Experiment, ExperimentConfig, Horizon, SweepConfig, TopologyConfig};
pub use runner::TrialOutcome;
pub use summary::{Aggregate, RunSummary, Stat};

/// Everything produced by one scheme over all trials.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub scheme: Scheme,
    pub outcomes: Vec<TrialOutcome>,
    pub aggregate: Aggregate,
    pub summary: RunSummary,
    pub total_secs: f64,
}

impl RunOutput {
    pub fn all_diverged(&self) -> bool {
        self.summary.trials_completed == 0
    }
}

pub fn execute(exp: &Experiment, scheme: Scheme) -> Result<RunOutput> {
    let start = runner::Stopwatch::start();
    let outcomes = runner::run_trials(exp, scheme)?;
    let aggregate = Aggregate::from_outcomes(&outcomes, exp.config.percentile_band);
    let summary = RunSummary::build(exp, scheme, &outcomes, &aggregate)?;
    Ok(RunOutput {
        scheme,
        outcomes,
        aggregate,
        summary,
        total_secs: start.secs(),
    })
}

#[derive(Debug, Serialize)]
struct Timing<'a> {
    scheme: &'a str,
    total_secs: f64,
    trial_secs: Vec<f64>,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// Writes `config.json`, `trial_<i>.csv`, `aggregate.csv`, `summary.json`,
/// `timing.json`, the graph edge list and the figures into `dir`.
pub fn write_run(dir: &Path, exp: &Experiment, out: &RunOutput) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.json"), exp.config.to_json_pretty())?;
    for o in &out.outcomes {
        std::fs::write(dir.join(format!("trial_{}.csv", o.trial)), o.metrics.to_csv())?;
        if let Some(tr) = &o.trace {
            std::fs::write(dir.join(format!("trace_{}.csv", o.trial)), tr.to_csv())?;
        }
    }
    std::fs::write(dir.join("aggregate.csv"), out.aggregate.to_csv())?;
    write_json(&dir.join("summary.json"), &out.summary)?;
    write_json(
        &dir.join("timing.json"),
        &Timing {
            scheme: out.scheme.name(),
            total_secs: out.total_secs,
            trial_secs: out.outcomes.iter().map(|o| o.elapsed_secs).collect(),
        },
    )?;
    if out.scheme == Scheme::Nr {
        std::fs::write(dir.join("graph.edges"), exp.graph.to_edge_list())?;
    }
    if out.aggregate.rows.is_empty() {
        return Ok(Vec::new());
    }
    let (_, warnings) = plot::plot_runs(&[dir.to_path_buf()], dir)?;
    Ok(warnings)
}

/// Result of the `run` command.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub outputs: Vec<RunOutput>,
    pub dirs: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// Runs every configured scheme. One scheme writes straight into `out`;
/// several get a subdirectory each. Fails with [`Error::AllDiverged`] after
/// writing if any scheme lost every trial.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    let exp = cfg.resolve()?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.json"), cfg.to_json_pretty())?;
    let mut report = RunReport {
        outputs: Vec::new(),
        dirs: Vec::new(),
        warnings: Vec::new(),
    };
    for &scheme in &cfg.schemes {
        let dir = if cfg.schemes.len() == 1 {
            out.to_path_buf()
        } else {
            out.join(scheme.name())
        };
        let o = execute(&exp, scheme)?;
        report.warnings.extend(write_run(&dir, &exp, &o)?);
        report.dirs.push(dir);
        report.outputs.push(o);
    }
    if let Some(o) = report.outputs.iter().find(|o| o.all_diverged()) {
        return Err(Error::AllDiverged {
            trials: o.summary.trials_total,
        });
    }
    Ok(report)
}

/// Headline numbers of one scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Headline {
    pub scheme: Scheme,
    pub trials_completed: usize,
    pub trials_diverged: usize,
    pub bound_window_grad_norm_sq: Stat,
    pub plateau_grad_norm_sq: Option<Stat>,
    pub plateau_loss: Option<Stat>,
    pub plateau_loss_stderr: Option<f64>,
    pub plateau_vbar: Option<Stat>,
}

impl Headline {
    pub fn of(s: &RunSummary) -> Self {
        Self {
            scheme: s.scheme,
            trials_completed: s.trials_completed,
            trials_diverged: s.trials_diverged,
            bound_window_grad_norm_sq: s.bound_window_grad_norm_sq,
            plateau_grad_norm_sq: s.plateau_grad_norm_sq,
            plateau_loss: s.plateau_loss,
            plateau_loss_stderr: s.plateau_loss_stderr,
            plateau_vbar: s.plateau_vbar,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub config_hash: String,
    pub nr: Headline,
    pub fl: Headline,
    /// FL plateau of `‖∇ℓ‖²` over the NR plateau.
    pub grad_plateau_ratio: Option<f64>,
    /// NR plateau loss standard error over FL's.
    pub loss_stderr_ratio: Option<f64>,
    pub bounds: BoundReport,
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub comparison: Comparison,
    pub nr: RunOutput,
    pub fl: RunOutput,
    pub warnings: Vec<String>,
}

/// NR and FL on identical traces, noise streams and initial averages.
pub fn compare(cfg: &ExperimentConfig, out: &Path) -> Result<CompareReport> {
    let mut cfg = cfg.clone();
    cfg.schemes = vec![Scheme::Nr, Scheme::Fl];
    let exp = cfg.resolve()?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.json"), cfg.to_json_pretty())?;
    let nr = execute(&exp, Scheme::Nr)?;
    let fl = execute(&exp, Scheme::Fl)?;
    let mut warnings = write_run(&out.join("nr"), &exp, &nr)?;
    warnings.extend(write_run(&out.join("fl"), &exp, &fl)?);
    if !nr.aggregate.rows.is_empty() && !fl.aggregate.rows.is_empty() {
        let (_, w) = plot::plot_runs(&[out.join("nr"), out.join("fl")], out)?;
        warnings.extend(w);
    }
    let (hn, hf) = (Headline::of(&nr.summary), Headline::of(&fl.summary));
    let grad_plateau_ratio = match (hn.plateau_grad_norm_sq, hf.plateau_grad_norm_sq) {
        (Some(n), Some(f)) => Some(f.mean / n.mean),
        _ => None,
    };
    let loss_stderr_ratio = match (hn.plateau_loss_stderr, hf.plateau_loss_stderr) {
        (Some(n), Some(f)) => Some(n / f),
        _ => None,
    };
    let comparison = Comparison {
        config_hash: cfg.content_hash(),
        nr: hn,
        fl: hf,
        grad_plateau_ratio,
        loss_stderr_ratio,
        bounds: nr.summary.bounds.clone(),
    };
    write_json(&out.join("comparison.json"), &comparison)?;
    if nr.all_diverged() && fl.all_diverged() {
        return Err(Error::AllDiverged {
            trials: cfg.trials,
        });
    }
    Ok(CompareReport {
        comparison,
        nr,
        fl,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub label: String,
    pub nodes: usize,
    pub gamma: f64,
    pub a: f64,
    pub lambda2: f64,
    pub theorem1_valid: bool,
    pub results: Vec<Headline>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub axis: String,
    pub points: Vec<SweepPoint>,
    /// Least-squares slope of `log(NR plateau ‖∇ℓ‖²)` against `log N`.
    pub loglog_slope: Option<f64>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "label,nodes,gamma,a,lambda2,scheme,trials_completed,plateau_grad_norm_sq,plateau_grad_norm_sq_stderr,plateau_vbar,plateau_loss\n",
        );
        let opt = |o: Option<Stat>| o.map(|s| s.mean).unwrap_or(f64::NAN);
        for p in &self.points {
            for h in &p.results {
                s.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{}\n",
                    p.label,
                    p.nodes,
                    p.gamma,
                    p.a,
                    p.lambda2,
                    h.scheme.name(),
                    h.trials_completed,
                    opt(h.plateau_grad_norm_sq),
                    h.plateau_grad_norm_sq.map(|s| s.stderr).unwrap_or(f64::NAN),
                    opt(h.plateau_vbar),
                    opt(h.plateau_loss),
                ));
            }
        }
        s
    }
}

/// Ordinary least-squares slope of `ln y` on `ln x`; needs two or more
/// positive pairs.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub report: SweepReport,
    pub warnings: Vec<String>,
}

/// Runs the configured schemes at each point of the sweep axis, writing
/// point `i` to `out/point_<i>`.
pub fn sweep(cfg: &ExperimentConfig, out: &Path) -> Result<SweepRun> {
    let sw = cfg
        .sweep
        .clone()
        .ok_or_else(|| Error::Config("sweep needs a `sweep` section".into()))?;
    if sw.is_empty() {
        return Err(Error::Config("sweep has no values".into()));
    }
    let configs = (0..sw.len())
        .map(|i| sw.apply(cfg, i))
        .collect::<Result<Vec<_>>>()?;
    let experiments = configs
        .iter()
        .map(|(c, _)| c.resolve())
        .collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.json"), cfg.to_json_pretty())?;

    let mut points = Vec::new();
    let mut warnings = Vec::new();
    let mut any_completed = false;
    for (i, ((_, label), exp)) in configs.iter().zip(&experiments).enumerate() {
        let mut results = Vec::new();
        for &scheme in &cfg.schemes {
            let o = execute(exp, scheme)?;
            let dir = out.join(format!("point_{i}")).join(scheme.name());
            warnings.extend(write_run(&dir, exp, &o)?);
            any_completed |= !o.all_diverged();
            results.push(Headline::of(&o.summary));
        }
        let bp = exp.bound_params();
        let init = runner::initial_conditions(exp, 0)?;
        let horizon = exp.config.horizon.expected_ticks(exp.rates.total());
        let rep = bound_report(&bp, &exp.rates, &exp.sigmas_sq, init, horizon)?;
        points.push(SweepPoint {
            label: label.clone(),
            nodes: exp.config.nodes,
            gamma: exp.hp.gamma,
            a: exp.hp.a,
            lambda2: exp.spectral.lambda2,
            theorem1_valid: rep.theorem1_valid,
            results,
        });
    }

    let nr_plateaus = |p: &SweepPoint| {
        p.results
            .iter()
            .find(|h| h.scheme == Scheme::Nr)
            .and_then(|h| h.plateau_grad_norm_sq)
            .map(|s| s.mean)
    };
    let loglog = if matches!(sw, SweepConfig::N(_)) {
        let (x, y): (Vec<f64>, Vec<f64>) = points
            .iter()
            .filter_map(|p| nr_plateaus(p).map(|v| (p.nodes as f64, v)))
            .unzip();
        loglog_slope(&x, &y)
    } else {
        None
    };
    let report = SweepReport {
        axis: sw.axis_name().into(),
        points,
        loglog_slope: loglog,
    };
    write_json(&out.join("sweep.json"), &report)?;
    std::fs::write(out.join("sweep.csv"), report.to_csv())?;

    let numeric = !matches!(sw, SweepConfig::Topology(_));
    let xs: Vec<f64> = report
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| if numeric { p.label.parse().unwrap_or(i as f64) } else { i as f64 })
        .collect();
    let series: Vec<plot::Series> = cfg
        .schemes
        .iter()
        .map(|&scheme| {
            let y = report
                .points
                .iter()
                .map(|p| {
                    p.results
                        .iter()
                        .find(|h| h.scheme == scheme)
                        .and_then(|h| h.plateau_grad_norm_sq)
                        .map(|s| s.mean)
                        .unwrap_or(f64::NAN)
                })
                .collect();
            plot::Series {
                label: scheme.name().to_uppercase(),
                x: xs.clone(),
                y,
                band: None,
            }
        })
        .collect();
    let spec = plot::PlotSpec {
        title: format!("plateau ‖∇ℓ(θ̄)‖² across {}", report.axis),
        x_label: if numeric { report.axis.clone() } else { "topology index".into() },
        y_label: "plateau grad_norm_sq".into(),
        log_x: matches!(sw, SweepConfig::N(_) | SweepConfig::Gamma(_)),
        log_y: true,
    };
    let r = plot::render_svg(&spec, &series);
    std::fs::write(out.join("sweep.svg"), r.svg)?;
    warnings.extend(r.warnings);

    if !any_completed {
        return Err(Error::AllDiverged {
            trials: cfg.trials,
        });
    }
    Ok(SweepRun { report, warnings })
}

/// Bound report for the configuration, at trial 0's initial state.
pub fn check(cfg: &ExperimentConfig) -> Result<BoundReport> {
    let exp = cfg.resolve()?;
    let init = runner::initial_conditions(&exp, 0)?;
    let horizon = exp.config.horizon.expected_ticks(exp.rates.total());
    bound_report(&exp.bound_params(), &exp.rates, &exp.sigmas_sq, init, horizon)
}

/// Human-readable verdict lines for a bound report.
pub fn check_verdicts(r: &BoundReport) -> Vec<String> {
    let mut v = vec![
        format!("L = {}, λ₂ = {}, d_max = {}, N = {}, ξ = {}", r.params.lipschitz, r.params.lambda2, r.params.max_degree, r.params.nodes, r.params.xi),
        format!("γ = {}, a = {}, σ² = {}", r.params.gamma, r.params.a, r.params.sigma_sq),
        format!("a threshold = {}, γ̄₁ = {}, γ̄₂ = {}", r.a_threshold, r.gamma_bar1, r.gamma_bar2),
        format!("κ = {}, η = {}, η̃ = {}", r.kappa, r.eta, r.eta_tilde),
    ];
    let fmt = |o: Option<f64>| o.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "n/a".into());
    if r.theorem1_valid {
        v.push(format!(
            "Theorem 1 applies: bound at K = {} is {}, asymptote {}",
            r.horizon,
            fmt(r.theorem1_bound),
            fmt(r.nr_asymptote)
        ));
    } else {
        v.push("Theorem 1 inapplicable".into());
    }
    if r.corollary1_valid {
        v.push(format!(
            "Corollary 1 applies: disagreement bound {}, asymptote {}",
            fmt(r.corollary1_bound),
            fmt(r.corollary1_asymptote)
        ));
    } else {
        v.push("Corollary 1 inapplicable".into());
    }
    if r.prop1_valid {
        v.push(format!(
            "Proposition 1 applies: FL bound {}, asymptote {}",
            fmt(r.prop1_bound),
            fmt(r.fl_asymptote)
        ));
    } else {
        v.push("Proposition 1 inapplicable".into());
    }
    v.extend(r.notes.iter().map(|n| format!("note: {n}")));
    v
}
