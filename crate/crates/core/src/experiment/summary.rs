//! Cross-trial aggregation and per-run summaries.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::analysis::{self, bound_report, BoundReport, InitialConditions, MetricsRow};
use crate::error::Result;
use crate::schemes::Scheme;

use super::config::{Experiment, ExperimentConfig, Horizon};
use super::runner::TrialOutcome;

/// Mean and standard error over a set of trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let (mean, stderr) = analysis::mean_stderr(values);
        Self {
            mean,
            stderr,
            n: values.len(),
        }
    }
}

/// Linear-interpolated quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub k: u64,
    pub t_mean: f64,
    pub n_trials: usize,
    pub vbar: Stat,
    pub grad_norm_sq: Stat,
    pub loss: Stat,
    pub running_avg_grad_norm_sq: Stat,
    pub running_avg_vbar: Stat,
    /// 2.5% / 97.5% percentiles of `vbar`, `grad_norm_sq` and `loss`.
    pub percentiles: Option<[Band; 3]>,
}

/// Per-tick statistics across completed trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub rows: Vec<AggregateRow>,
    pub percentile_band: bool,
}

const METRIC_NAMES: [&str; 5] = [
    "vbar",
    "grad_norm_sq",
    "loss",
    "running_avg_grad_norm_sq",
    "running_avg_vbar",
];

impl Aggregate {
    /// Rows are aligned by index; with a common thinning step that is the
    /// same as aligning by tick.
    pub fn from_outcomes(outcomes: &[TrialOutcome], percentile_band: bool) -> Self {
        let done: Vec<&[MetricsRow]> = outcomes
            .iter()
            .filter(|o| o.completed())
            .map(|o| o.metrics.rows.as_slice())
            .collect();
        let len = done.iter().map(|r| r.len()).max().unwrap_or(0);
        let mut rows = Vec::with_capacity(len);
        for idx in 0..len {
            let at: Vec<&MetricsRow> = done.iter().filter_map(|r| r.get(idx)).collect();
            let col = |f: fn(&MetricsRow) -> f64| at.iter().map(|r| f(r)).collect::<Vec<_>>();
            let vbar = col(|r| r.vbar);
            let gsq = col(|r| r.grad_norm_sq);
            let loss = col(|r| r.loss);
            let percentiles = percentile_band.then(|| {
                [&vbar, &gsq, &loss].map(|v| {
                    let mut s = v.clone();
                    s.sort_by(f64::total_cmp);
                    Band {
                        lo: quantile(&s, 0.025),
                        hi: quantile(&s, 0.975),
                    }
                })
            });
            rows.push(AggregateRow {
                k: at[0].k,
                t_mean: col(|r| r.t).iter().sum::<f64>() / at.len() as f64,
                n_trials: at.len(),
                vbar: Stat::of(&vbar),
                grad_norm_sq: Stat::of(&gsq),
                loss: Stat::of(&loss),
                running_avg_grad_norm_sq: Stat::of(&col(|r| r.running_avg_grad_norm_sq)),
                running_avg_vbar: Stat::of(&col(|r| r.running_avg_vbar)),
                percentiles,
            });
        }
        Self {
            rows,
            percentile_band,
        }
    }

    pub fn csv_header(&self) -> String {
        let mut h = String::from("k,t_mean,n_trials");
        for m in METRIC_NAMES {
            let _ = write!(h, ",{m}_mean,{m}_stderr");
        }
        if self.percentile_band {
            for m in &METRIC_NAMES[..3] {
                let _ = write!(h, ",{m}_p025,{m}_p975");
            }
        }
        h
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.csv_header();
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{},{},{}", r.k, r.t_mean, r.n_trials);
            for st in [
                r.vbar,
                r.grad_norm_sq,
                r.loss,
                r.running_avg_grad_norm_sq,
                r.running_avg_vbar,
            ] {
                let _ = write!(s, ",{},{}", st.mean, st.stderr);
            }
            if let Some(p) = &r.percentiles {
                for b in p {
                    let _ = write!(s, ",{},{}", b.lo, b.hi);
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn mean_series(&self, f: impl Fn(&AggregateRow) -> Stat) -> Vec<f64> {
        self.rows.iter().map(|r| f(r).mean).collect()
    }

    pub fn stderr_series(&self, f: impl Fn(&AggregateRow) -> Stat) -> Vec<f64> {
        self.rows.iter().map(|r| f(r).stderr).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub ticks: u64,
    pub diverged_at: Option<u64>,
    pub final_time: f64,
    pub loss0: f64,
    pub vbar0: f64,
    /// `(1/K)Σ_{k<K}‖∇ℓ‖²`.
    pub bound_window_grad_norm_sq: f64,
    pub bound_window_vbar: f64,
    pub final_vbar: f64,
    pub final_grad_norm_sq: f64,
    pub final_loss: f64,
    pub plateau_grad_norm_sq: Option<f64>,
    pub plateau_vbar: Option<f64>,
    pub plateau_loss: Option<f64>,
}

impl TrialSummary {
    pub fn from_outcome(o: &TrialOutcome, plateau_fraction: f64) -> Self {
        let m = &o.metrics;
        let tail = |f: fn(&MetricsRow) -> f64| analysis::plateau(&m.series(f), plateau_fraction).ok();
        Self {
            trial: o.trial,
            ticks: m.ticks,
            diverged_at: o.diverged_at,
            final_time: o.final_time,
            loss0: o.initial.loss0,
            vbar0: o.initial.vbar0,
            bound_window_grad_norm_sq: m.bound_window_grad_norm_sq(),
            bound_window_vbar: m.bound_window_vbar(),
            final_vbar: m.last.0,
            final_grad_norm_sq: m.last.1,
            final_loss: m.last.2,
            plateau_grad_norm_sq: tail(|r| r.grad_norm_sq),
            plateau_vbar: tail(|r| r.vbar),
            plateau_loss: tail(|r| r.loss),
        }
    }
}

/// Bounds evaluated on the real-time axis at the configured horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealtimeBounds {
    pub time: f64,
    pub theorem1: Option<f64>,
    pub corollary1: Option<f64>,
    pub prop1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scheme: Scheme,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub trials_total: usize,
    pub trials_completed: usize,
    pub trials_diverged: usize,
    pub bound_window_grad_norm_sq: Stat,
    pub bound_window_vbar: Stat,
    pub plateau_grad_norm_sq: Option<Stat>,
    pub plateau_vbar: Option<Stat>,
    pub plateau_loss: Option<Stat>,
    /// Tail mean of the per-tick cross-trial standard error of the loss.
    pub plateau_loss_stderr: Option<f64>,
    pub final_loss: Stat,
    /// Bounds at the trial-averaged initial conditions; each bound is affine
    /// in them, so this equals the average of the per-trial bounds.
    pub bounds: BoundReport,
    pub realtime_bounds: Option<RealtimeBounds>,
    pub trials: Vec<TrialSummary>,
}

fn stat_of_options(values: impl Iterator<Item = Option<f64>>) -> Option<Stat> {
    let v: Option<Vec<f64>> = values.collect();
    v.filter(|v| !v.is_empty()).map(|v| Stat::of(&v))
}

impl RunSummary {
    pub fn build(exp: &Experiment, scheme: Scheme, outcomes: &[TrialOutcome], agg: &Aggregate) -> Result<Self> {
        let frac = exp.config.plateau_fraction;
        let trials: Vec<TrialSummary> = outcomes.iter().map(|o| TrialSummary::from_outcome(o, frac)).collect();
        let done: Vec<&TrialSummary> = trials.iter().filter(|t| t.diverged_at.is_none()).collect();
        let over = |f: fn(&TrialSummary) -> f64| Stat::of(&done.iter().map(|t| f(t)).collect::<Vec<_>>());

        let n = outcomes.len().max(1) as f64;
        let loss0 = outcomes.iter().map(|o| o.initial.loss0).sum::<f64>() / n;
        let vbar0 = outcomes.iter().map(|o| o.initial.vbar0).sum::<f64>() / n;
        let init = InitialConditions {
            loss0,
            vbar0,
            fl_loss0: loss0,
        };
        let bp = exp.bound_params();
        let horizon = exp.config.horizon.expected_ticks(exp.rates.total());
        let bounds = bound_report(&bp, &exp.rates, &exp.sigmas_sq, init, horizon)?;
        let realtime_bounds = match exp.config.horizon {
            Horizon::Ticks(_) => None,
            Horizon::Time(t) => Some(RealtimeBounds {
                time: t,
                theorem1: bounds
                    .theorem1_valid
                    .then(|| analysis::theorem1_bound_realtime(&bp, loss0, vbar0, t))
                    .transpose()?,
                corollary1: bounds
                    .corollary1_valid
                    .then(|| analysis::corollary1_bound_realtime(&bp, loss0, vbar0, t))
                    .transpose()?,
                prop1: bounds
                    .prop1_valid
                    .then(|| {
                        analysis::prop1_bound_realtime(bp.lipschitz, bp.gamma, &exp.rates, &exp.sigmas_sq, loss0, t)
                    })
                    .transpose()?,
            }),
        };
        let loss_se = agg.stderr_series(|r| r.loss);
        Ok(Self {
            scheme,
            config_hash: exp.config.content_hash(),
            config: exp.config.clone(),
            trials_total: outcomes.len(),
            trials_completed: done.len(),
            trials_diverged: outcomes.len() - done.len(),
            bound_window_grad_norm_sq: over(|t| t.bound_window_grad_norm_sq),
            bound_window_vbar: over(|t| t.bound_window_vbar),
            plateau_grad_norm_sq: stat_of_options(done.iter().map(|t| t.plateau_grad_norm_sq)),
            plateau_vbar: stat_of_options(done.iter().map(|t| t.plateau_vbar)),
            plateau_loss: stat_of_options(done.iter().map(|t| t.plateau_loss)),
            plateau_loss_stderr: analysis::plateau(&loss_se, frac).ok(),
            final_loss: over(|t| t.final_loss),
            bounds,
            realtime_bounds,
            trials,
        })
    }
}
