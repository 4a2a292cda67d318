//! Independent trials, run inline or on scoped worker threads.

use std::time::Instant;

use crate::analysis::{state_metrics, InitialConditions, MetricsRecorder, MetricsTrace};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};
use crate::schemes::{self, FlState, Scheme, SchemeInputs, SchemeState};
use crate::streams::{self, EventTrace};

use super::config::{Experiment, Horizon};

/// Wall-clock timer that reads zero where the platform has no clock
/// (`wasm32-unknown-unknown`).
#[derive(Debug, Clone, Copy)]
pub struct Stopwatch(Option<Instant>);

impl Stopwatch {
    pub fn start() -> Self {
        Self(if cfg!(target_arch = "wasm32") { None } else { Some(Instant::now()) })
    }

    pub fn secs(&self) -> f64 {
        self.0.map(|s| s.elapsed().as_secs_f64()).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub trial: usize,
    pub scheme: Scheme,
    pub metrics: MetricsTrace,
    /// Tick at which a parameter became non-finite.
    pub diverged_at: Option<u64>,
    pub initial: InitialConditions,
    /// Arrival time of the last completed tick.
    pub final_time: f64,
    pub trace: Option<EventTrace>,
    pub elapsed_secs: f64,
}

impl TrialOutcome {
    pub fn completed(&self) -> bool {
        self.diverged_at.is_none()
    }
}

/// Event trace of `trial`; NR and FL see the same one.
pub fn trial_trace(exp: &Experiment, trial: usize) -> Result<EventTrace> {
    let seed = rng::derive_seed(exp.config.seed, trial as u64, Purpose::Trace);
    match exp.config.horizon {
        Horizon::Ticks(k) => Ok(streams::sample_trace(&exp.rates, k as usize, seed)),
        Horizon::Time(t) => streams::sample_trace_until(&exp.rates, t, seed),
    }
}

/// Starting state of `trial`. FL starts at the average of the NR nodes, so
/// both schemes share `θ̄₀`.
pub fn initial_state(exp: &Experiment, scheme: Scheme, trial: usize) -> Result<SchemeState> {
    let mut r = rng::derive_rng(exp.config.seed, trial as u64, Purpose::Init);
    let nr = schemes::init_nr(&exp.center, exp.config.nodes, exp.config.init.mode, &mut r)?;
    Ok(match scheme {
        Scheme::Nr => SchemeState::Nr(nr),
        Scheme::Fl => SchemeState::Fl(FlState::new(nr.ensemble_average())?),
    })
}

/// `ℓ(θ̄₀)` and `V̄₀` of `trial`.
pub fn initial_conditions(exp: &Experiment, trial: usize) -> Result<InitialConditions> {
    let s = initial_state(exp, Scheme::Nr, trial)?;
    let (vbar0, _, loss0) = state_metrics(&exp.model, &s);
    Ok(InitialConditions {
        loss0,
        vbar0,
        fl_loss0: loss0,
    })
}

pub fn run_trial(exp: &Experiment, scheme: Scheme, trial: usize) -> Result<TrialOutcome> {
    let start = Stopwatch::start();
    let trace = trial_trace(exp, trial)?;
    let init = initial_state(exp, scheme, trial)?;
    let initial = initial_conditions(exp, trial)?;
    let mut noise_rng = rng::derive_rng(exp.config.seed, trial as u64, Purpose::Noise);
    let inputs = SchemeInputs {
        model: &exp.model,
        noise: &exp.noise,
        graph: Some(&exp.graph),
        hp: exp.hp,
        trace: &trace,
    };
    let mut recorder = MetricsRecorder::new(&exp.model, &init, exp.config.thin);
    let diverged_at = match schemes::run_scheme(init, &inputs, &mut noise_rng, &mut recorder) {
        Ok(_) => None,
        Err(Error::Divergence { tick }) => Some(tick),
        Err(e) => return Err(e),
    };
    let metrics = recorder.finish();
    let final_time = match metrics.ticks {
        0 => 0.0,
        k => trace.events[k as usize - 1].t,
    };
    Ok(TrialOutcome {
        trial,
        scheme,
        metrics,
        diverged_at,
        initial,
        final_time,
        trace: exp.config.export_traces.then_some(trace),
        elapsed_secs: start.secs(),
    })
}

/// Runs every trial of the experiment; `workers = 1` stays on the calling
/// thread. Outcomes are ordered by trial index.
pub fn run_trials(exp: &Experiment, scheme: Scheme) -> Result<Vec<TrialOutcome>> {
    let trials = exp.config.trials;
    let workers = exp.config.workers.clamp(1, trials.max(1));
    if workers == 1 {
        return (0..trials).map(|i| run_trial(exp, scheme, i)).collect();
    }
    let mut slots: Vec<Option<Result<TrialOutcome>>> = (0..trials).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    (w..trials)
                        .step_by(workers)
                        .map(|i| (i, run_trial(exp, scheme, i)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("trial worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every trial ran")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::config::ExperimentConfig;

    fn exp(workers: usize) -> Experiment {
        let json = format!(
            r#"{{
            "schema_version": 1,
            "model": {{"kind": "quadratic", "dim": 3, "eig_range": [0.5, 1.0]}},
            "nodes": 4,
            "noise": {{"model": "gaussian", "sigma": 0.5}},
            "rates": [2.0, 1.0, 1.0, 1.0],
            "hyper": {{"gamma": 0.05, "a": 1.0}},
            "horizon": {{"ticks": 200}},
            "trials": 5,
            "thin": 10,
            "workers": {workers}
        }}"#
        );
        ExperimentConfig::from_json(&json).unwrap().resolve().unwrap()
    }

    #[test]
    fn workers_do_not_change_results() {
        let a = run_trials(&exp(1), Scheme::Nr).unwrap();
        let b = run_trials(&exp(3), Scheme::Nr).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.trial, y.trial);
            assert_eq!(x.metrics, y.metrics);
        }
        assert_eq!(a[0].metrics.rows.len(), 20);
    }

    #[test]
    fn schemes_share_initial_average() {
        let e = exp(1);
        let nr = initial_state(&e, Scheme::Nr, 2).unwrap().reference_point();
        let fl = initial_state(&e, Scheme::Fl, 2).unwrap().reference_point();
        assert_eq!(nr, fl);
        assert_ne!(nr, initial_state(&e, Scheme::Nr, 3).unwrap().reference_point());
    }

    #[test]
    fn divergence_is_recorded() {
        let mut e = exp(1);
        e.hp.gamma = 100.0;
        let out = run_trial(&e, Scheme::Fl, 0).unwrap();
        assert!(out.diverged_at.is_some());
        assert!(!out.completed());
    }
}
