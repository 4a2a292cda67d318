//! Convergence constants, upper bounds, and trajectory metrics.
//!
//! The bounds take the exact `L`, `λ₂`, `d̄` and `σ²` used to drive the
//! simulation, so an empirical average above its bound points at a bug
//! rather than at estimation error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg;
use crate::problems::LossModel;
use crate::schemes::{AppliedStep, HyperParams, NrState, SchemeState, StepObserver};
use crate::streams::{self, Event, NodeRates};

/// Which rate goes with which term in `κ`, `γ̄₁` and the `a` threshold.
///
/// The printed statement pairs `Lμ_min` with `aλ₂μ_max`; one line of the
/// accompanying derivation has them the other way round. `Proof` evaluates
/// that swapped variant for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateConvention {
    #[default]
    Statement,
    Proof,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub lipschitz: f64,
    pub lambda2: f64,
    pub max_degree: f64,
    pub nodes: usize,
    pub xi: f64,
    /// `σ² = Σσᵢ²`.
    pub sigma_sq: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    pub mu_total: f64,
    pub gamma: f64,
    pub a: f64,
    #[serde(default)]
    pub convention: RateConvention,
}

impl BoundParams {
    pub fn new(
        lipschitz: f64,
        lambda2: f64,
        max_degree: usize,
        rates: &NodeRates,
        sigma_sq: f64,
        hp: HyperParams,
    ) -> Self {
        Self {
            lipschitz,
            lambda2,
            max_degree: max_degree as f64,
            nodes: rates.len(),
            xi: rates.xi(),
            sigma_sq,
            mu_min: rates.min(),
            mu_max: rates.max(),
            mu_total: rates.total(),
            gamma: hp.gamma,
            a: hp.a,
            convention: RateConvention::Statement,
        }
    }

    pub fn with_convention(mut self, convention: RateConvention) -> Self {
        self.convention = convention;
        self
    }

    fn n(&self) -> f64 {
        self.nodes as f64
    }

    /// `(rate paired with L, rate paired with aλ₂)`.
    fn paired_rates(&self) -> (f64, f64) {
        match self.convention {
            RateConvention::Statement => (self.mu_min, self.mu_max),
            RateConvention::Proof => (self.mu_max, self.mu_min),
        }
    }
}

/// `κ = 2(Lμ_min − aλ₂μ_max) + (4γξ/N)(L² + 2a²d̄²)`.
pub fn kappa(bp: &BoundParams) -> f64 {
    let (mu_l, mu_a) = bp.paired_rates();
    let l = bp.lipschitz;
    2.0 * (l * mu_l - bp.a * bp.lambda2 * mu_a)
        + 4.0 * bp.gamma * bp.xi / bp.n() * (l * l + 2.0 * bp.a * bp.a * bp.max_degree * bp.max_degree)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizeLimits {
    pub gamma_bar1: f64,
    pub gamma_bar2: f64,
    /// `γ̄₁ > 0` exactly when `a` exceeds this.
    pub a_threshold: f64,
}

pub fn step_size_limits(bp: &BoundParams) -> StepSizeLimits {
    let (mu_l, mu_a) = bp.paired_rates();
    let l = bp.lipschitz;
    let n = bp.n();
    let gamma_bar1 = n * (2.0 * bp.a * bp.lambda2 * mu_a - l * (2.0 * mu_l + bp.xi / 2.0))
        / (6.0 * bp.xi * (l * l + 2.0 * bp.a * bp.a * bp.max_degree * bp.max_degree));
    let gamma_bar2 = 1.0 / (4.0 * l * (2.0 * n + 1.0));
    let a_threshold = (4.0 * mu_l * l + bp.xi * l) / (4.0 * bp.lambda2 * mu_a);
    StepSizeLimits {
        gamma_bar1,
        gamma_bar2,
        a_threshold,
    }
}

/// `η = (γξ/N)(½ − 2γL(2 + 1/N))`.
pub fn eta(bp: &BoundParams) -> f64 {
    let n = bp.n();
    bp.gamma * bp.xi / n * (0.5 - 2.0 * bp.gamma * bp.lipschitz * (2.0 + 1.0 / n))
}

/// Learning rate at which `η` changes sign: `N/(4L(2N+1))`. This is `N`
/// times larger than `γ̄₂`, so `γ < γ̄₂` is the stricter condition.
pub fn eta_gamma_limit(bp: &BoundParams) -> f64 {
    let n = bp.n();
    n / (4.0 * bp.lipschitz * (2.0 * n + 1.0))
}

fn check_horizon(k: f64) -> Result<()> {
    if !(k > 0.0) {
        return Err(Error::Domain(format!("horizon must be positive (got {k})")));
    }
    Ok(())
}

fn positive_eta(bp: &BoundParams) -> Result<f64> {
    let e = eta(bp);
    if !(e > 0.0) {
        return Err(Error::Precondition(format!("η = {e} is not positive")));
    }
    Ok(e)
}

/// `(1/(ηK))[ℓ(θ̄₀) + LV̄₀ + KLγ²ξσ²/N²·(1 + 1/(2N))]`.
pub fn theorem1_bound(bp: &BoundParams, loss0: f64, vbar0: f64, k: f64) -> Result<f64> {
    check_horizon(k)?;
    theorem1_at(bp, loss0, vbar0, 1.0 / k)
}

/// Real-time form: `1/K` replaced by `(1 − e^{−μt})/(μt)`.
pub fn theorem1_bound_realtime(bp: &BoundParams, loss0: f64, vbar0: f64, t: f64) -> Result<f64> {
    theorem1_at(bp, loss0, vbar0, streams::realtime_factor(bp.mu_total, t)?)
}

pub fn theorem1_asymptote(bp: &BoundParams) -> Result<f64> {
    theorem1_at(bp, 0.0, 0.0, 0.0)
}

fn theorem1_at(bp: &BoundParams, loss0: f64, vbar0: f64, inv_k: f64) -> Result<f64> {
    let eta = positive_eta(bp)?;
    let n = bp.n();
    let noise = bp.lipschitz * bp.gamma * bp.gamma * bp.xi * bp.sigma_sq / (n * n) * (1.0 + 1.0 / (2.0 * n));
    Ok(inv_k * (loss0 + bp.lipschitz * vbar0) / eta + noise / eta)
}

/// Corollary bound on `(1/K)ΣV̄_k`; needs `κ < 0` and `η > 0`.
pub fn corollary1_bound(bp: &BoundParams, loss0: f64, vbar0: f64, k: f64) -> Result<f64> {
    check_horizon(k)?;
    corollary1_at(bp, loss0, vbar0, 1.0 / k)
}

pub fn corollary1_bound_realtime(bp: &BoundParams, loss0: f64, vbar0: f64, t: f64) -> Result<f64> {
    corollary1_at(bp, loss0, vbar0, streams::realtime_factor(bp.mu_total, t)?)
}

pub fn corollary1_asymptote(bp: &BoundParams) -> Result<f64> {
    corollary1_at(bp, 0.0, 0.0, 0.0)
}

fn corollary1_at(bp: &BoundParams, loss0: f64, vbar0: f64, inv_k: f64) -> Result<f64> {
    let kap = kappa(bp);
    if !(kap < 0.0) {
        return Err(Error::Precondition(format!("κ = {kap} is not negative")));
    }
    let eta = positive_eta(bp)?;
    let abs_k = kap.abs();
    let (n, g, l, xi, s2) = (bp.n(), bp.gamma, bp.lipschitz, bp.xi, bp.sigma_sq);
    let transient = (n / g + 4.0 * l * g * xi / eta) * vbar0 + 4.0 * g * xi / eta * loss0;
    let noise_grad = 4.0 * l * g.powi(3) * xi * xi * s2 / (eta * abs_k * n * n) * (1.0 + 1.0 / (2.0 * n));
    let noise_local = g * xi * s2 / (abs_k * n);
    Ok(inv_k * transient / abs_k + noise_grad + noise_local)
}

/// `η̃ = γ(1 − Lγ/2)`.
pub fn eta_tilde(gamma: f64, lipschitz: f64) -> f64 {
    gamma * (1.0 - lipschitz * gamma / 2.0)
}

/// Rate-weighted noise `Σ(μᵢ/μ)σᵢ²`.
pub fn rate_weighted_variance(rates: &NodeRates, sigmas_sq: &[f64]) -> Result<f64> {
    if sigmas_sq.len() != rates.len() {
        return Err(Error::Config("one variance per node is required".into()));
    }
    Ok(sigmas_sq
        .iter()
        .enumerate()
        .map(|(i, s)| rates.share(i) * s)
        .sum())
}

/// Federated bound `ℓ(θ₀)/(η̃K) + (Lγ²/(2η̃))Σ(μᵢ/μ)σᵢ²`, valid for
/// `γ ∈ (0, 2/L)`.
pub fn prop1_bound(
    lipschitz: f64,
    gamma: f64,
    rates: &NodeRates,
    sigmas_sq: &[f64],
    loss0: f64,
    k: f64,
) -> Result<f64> {
    check_horizon(k)?;
    prop1_at(lipschitz, gamma, rates, sigmas_sq, loss0, 1.0 / k)
}

pub fn prop1_bound_realtime(
    lipschitz: f64,
    gamma: f64,
    rates: &NodeRates,
    sigmas_sq: &[f64],
    loss0: f64,
    t: f64,
) -> Result<f64> {
    let f = streams::realtime_factor(rates.total(), t)?;
    prop1_at(lipschitz, gamma, rates, sigmas_sq, loss0, f)
}

pub fn prop1_asymptote(lipschitz: f64, gamma: f64, rates: &NodeRates, sigmas_sq: &[f64]) -> Result<f64> {
    prop1_at(lipschitz, gamma, rates, sigmas_sq, 0.0, 0.0)
}

fn prop1_at(
    lipschitz: f64,
    gamma: f64,
    rates: &NodeRates,
    sigmas_sq: &[f64],
    loss0: f64,
    inv_k: f64,
) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 2.0 / lipschitz) {
        return Err(Error::Precondition(format!(
            "γ = {gamma} is outside (0, 2/L) = (0, {})",
            2.0 / lipschitz
        )));
    }
    let et = eta_tilde(gamma, lipschitz);
    let weighted = rate_weighted_variance(rates, sigmas_sq)?;
    Ok(inv_k * loss0 / et + lipschitz * gamma * gamma / (2.0 * et) * weighted)
}

/// Every derived constant plus the bounds at horizon `K`, with validity flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub params: BoundParams,
    pub kappa: f64,
    /// `κ` under the other rate pairing.
    pub kappa_alternate: f64,
    pub eta: f64,
    pub eta_gamma_limit: f64,
    pub eta_tilde: f64,
    pub gamma_bar1: f64,
    pub gamma_bar2: f64,
    pub a_threshold: f64,
    pub horizon: f64,
    pub loss0: f64,
    pub vbar0: f64,
    pub fl_loss0: f64,
    pub rate_weighted_variance: f64,
    pub theorem1_valid: bool,
    pub corollary1_valid: bool,
    pub prop1_valid: bool,
    pub theorem1_bound: Option<f64>,
    pub corollary1_bound: Option<f64>,
    pub prop1_bound: Option<f64>,
    pub nr_asymptote: Option<f64>,
    pub corollary1_asymptote: Option<f64>,
    pub fl_asymptote: Option<f64>,
    pub notes: Vec<String>,
}

/// Inputs for [`bound_report`] that describe the starting point.
#[derive(Debug, Clone, Copy)]
pub struct InitialConditions {
    /// `ℓ(θ̄₀)` for NR.
    pub loss0: f64,
    pub vbar0: f64,
    /// `ℓ(θ₀)` for FL.
    pub fl_loss0: f64,
}

pub fn bound_report(
    bp: &BoundParams,
    rates: &NodeRates,
    sigmas_sq: &[f64],
    init: InitialConditions,
    horizon: f64,
) -> Result<BoundReport> {
    let limits = step_size_limits(bp);
    let kap = kappa(bp);
    let alt = kappa(&bp.with_convention(match bp.convention {
        RateConvention::Statement => RateConvention::Proof,
        RateConvention::Proof => RateConvention::Statement,
    }));
    let e = eta(bp);
    let mut notes = Vec::new();

    let a_ok = bp.a > limits.a_threshold;
    let gamma_ok = bp.gamma < limits.gamma_bar1.min(limits.gamma_bar2);
    if !a_ok {
        notes.push(format!(
            "a = {} is not above the threshold {}; γ̄₁ = {} ≤ 0",
            bp.a, limits.a_threshold, limits.gamma_bar1
        ));
    }
    if a_ok && !gamma_ok {
        notes.push(format!(
            "γ = {} is not below min(γ̄₁, γ̄₂) = {}",
            bp.gamma,
            limits.gamma_bar1.min(limits.gamma_bar2)
        ));
    }
    let theorem1_valid = a_ok && gamma_ok && e > 0.0;
    let corollary1_valid = theorem1_valid && kap < 0.0;
    if theorem1_valid && kap >= 0.0 {
        notes.push(format!("κ = {kap} is not negative"));
    }
    let prop1_valid = bp.gamma > 0.0 && bp.gamma < 2.0 / bp.lipschitz;
    if !prop1_valid {
        notes.push(format!("γ = {} is outside (0, 2/L)", bp.gamma));
    }

    let theorem1_bound = theorem1_valid
        .then(|| theorem1_bound(bp, init.loss0, init.vbar0, horizon))
        .transpose()?;
    let nr_asymptote = theorem1_valid.then(|| theorem1_asymptote(bp)).transpose()?;
    let corollary1_bound = corollary1_valid
        .then(|| corollary1_bound(bp, init.loss0, init.vbar0, horizon))
        .transpose()?;
    let corollary1_asymptote = corollary1_valid.then(|| corollary1_asymptote(bp)).transpose()?;
    let prop1_bound = prop1_valid
        .then(|| prop1_bound(bp.lipschitz, bp.gamma, rates, sigmas_sq, init.fl_loss0, horizon))
        .transpose()?;
    let fl_asymptote = prop1_valid
        .then(|| prop1_asymptote(bp.lipschitz, bp.gamma, rates, sigmas_sq))
        .transpose()?;

    Ok(BoundReport {
        params: *bp,
        kappa: kap,
        kappa_alternate: alt,
        eta: e,
        eta_gamma_limit: eta_gamma_limit(bp),
        eta_tilde: eta_tilde(bp.gamma, bp.lipschitz),
        gamma_bar1: limits.gamma_bar1,
        gamma_bar2: limits.gamma_bar2,
        a_threshold: limits.a_threshold,
        horizon,
        loss0: init.loss0,
        vbar0: init.vbar0,
        fl_loss0: init.fl_loss0,
        rate_weighted_variance: rate_weighted_variance(rates, sigmas_sq)?,
        theorem1_valid,
        corollary1_valid,
        prop1_valid,
        theorem1_bound,
        corollary1_bound,
        prop1_bound,
        nr_asymptote,
        corollary1_asymptote,
        fl_asymptote,
        notes,
    })
}

/// One recorded tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub k: u64,
    pub t: f64,
    pub node: usize,
    pub vbar: f64,
    pub grad_norm_sq: f64,
    pub loss: f64,
    pub running_avg_grad_norm_sq: f64,
    pub running_avg_vbar: f64,
}

pub const METRICS_CSV_HEADER: &str =
    "k,t,node,vbar,grad_norm_sq,loss,running_avg_grad_norm_sq,running_avg_vbar";

impl MetricsRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.k,
            self.t,
            self.node,
            self.vbar,
            self.grad_norm_sq,
            self.loss,
            self.running_avg_grad_norm_sq,
            self.running_avg_vbar
        )
    }
}

/// Point metrics of a state: `(V̄, ‖∇ℓ(θ̄)‖², ℓ(θ̄))`.
pub fn state_metrics(model: &LossModel, state: &SchemeState) -> (f64, f64, f64) {
    let reference = state.reference_point();
    let vbar = match state {
        SchemeState::Nr(s) => s.disagreement_about(&reference),
        SchemeState::Fl(_) => 0.0,
    };
    let mut g = vec![0.0; reference.len()];
    model.grad_into(&reference, &mut g);
    (vbar, linalg::norm_sq(&g), model.loss(&reference))
}

/// Recorded rows plus exact running totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTrace {
    pub rows: Vec<MetricsRow>,
    pub thin: u64,
    /// Ticks completed.
    pub ticks: u64,
    /// Metrics of the initial state (tick 0).
    pub initial: (f64, f64, f64),
    /// Metrics of the last state reached.
    pub last: (f64, f64, f64),
    /// `Σ_{k=1}^{K}` of `‖∇ℓ‖²` and `V̄` over post-tick states.
    pub sum_grad_norm_sq: f64,
    pub sum_vbar: f64,
}

impl MetricsTrace {
    /// `(1/K)Σ_{k=0}^{K−1}‖∇ℓ(θ̄_k)‖²`, the quantity the NR and FL bounds cover.
    pub fn bound_window_grad_norm_sq(&self) -> f64 {
        if self.ticks == 0 {
            return self.initial.1;
        }
        (self.initial.1 + self.sum_grad_norm_sq - self.last.1) / self.ticks as f64
    }

    /// `(1/K)Σ_{k=0}^{K−1}V̄_k`.
    pub fn bound_window_vbar(&self) -> f64 {
        if self.ticks == 0 {
            return self.initial.0;
        }
        (self.initial.0 + self.sum_vbar - self.last.0) / self.ticks as f64
    }

    pub fn series(&self, f: impl Fn(&MetricsRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.rows.len() + 1));
        s.push_str(METRICS_CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.csv_line());
            s.push('\n');
        }
        s
    }
}

/// Streaming metrics observer. Records every `thin`-th tick; the running
/// averages include every tick regardless of thinning.
#[derive(Debug)]
pub struct MetricsRecorder<'a> {
    model: &'a LossModel,
    trace: MetricsTrace,
}

impl<'a> MetricsRecorder<'a> {
    pub fn new(model: &'a LossModel, initial: &SchemeState, thin: u64) -> Self {
        let m0 = state_metrics(model, initial);
        Self {
            model,
            trace: MetricsTrace {
                rows: Vec::new(),
                thin: thin.max(1),
                ticks: 0,
                initial: m0,
                last: m0,
                sum_grad_norm_sq: 0.0,
                sum_vbar: 0.0,
            },
        }
    }

    pub fn finish(self) -> MetricsTrace {
        self.trace
    }

    fn record(&mut self, event: &Event, state: &SchemeState) {
        let (vbar, gsq, loss) = state_metrics(self.model, state);
        let tr = &mut self.trace;
        tr.ticks = event.k;
        tr.sum_grad_norm_sq += gsq;
        tr.sum_vbar += vbar;
        tr.last = (vbar, gsq, loss);
        if event.k.is_multiple_of(tr.thin) {
            let k = event.k as f64;
            tr.rows.push(MetricsRow {
                k: event.k,
                t: event.t,
                node: event.node,
                vbar,
                grad_norm_sq: gsq,
                loss,
                running_avg_grad_norm_sq: tr.sum_grad_norm_sq / k,
                running_avg_vbar: tr.sum_vbar / k,
            });
        }
    }
}

impl StepObserver for MetricsRecorder<'_> {
    fn after_step(&mut self, step: &AppliedStep<'_>, state: &SchemeState) {
        self.record(step.event, state);
    }
}

/// Metrics of an already materialized trajectory: the initial state followed
/// by `(event, state after event)` pairs.
pub fn trajectory_metrics(
    model: &LossModel,
    initial: &SchemeState,
    trajectory: &[(Event, SchemeState)],
    thin: u64,
) -> MetricsTrace {
    let mut rec = MetricsRecorder::new(model, initial, thin);
    for (event, state) in trajectory {
        rec.record(event, state);
    }
    rec.finish()
}

/// `|V̄_{k+1} − RHS|` where RHS rebuilds `V̄_{k+1}` from the exact
/// decomposition into the gradient, consensus and noise parts `δ^f`, `δ^g`,
/// `δ^n` of the applied step.
#[allow(clippy::too_many_arguments)]
pub fn lemma1_residual(
    pre: &NrState,
    post: &NrState,
    g: &Graph,
    hp: &HyperParams,
    active: usize,
    true_grad: &[f64],
    noise: &[f64],
) -> f64 {
    let n = pre.nodes();
    let nf = n as f64;
    let p = pre.dim();
    let avg = pre.ensemble_average();
    let vbar = pre.disagreement_about(&avg);
    let e_i: Vec<f64> = pre.theta(active).iter().zip(&avg).map(|(t, m)| t - m).collect();

    let mut cg = vec![0.0; p];
    for &j in g.neighbors(active) {
        cg.iter_mut()
            .zip(pre.theta(active).iter().zip(pre.theta(j)))
            .for_each(|(c, (a, b))| *c += a - b);
    }

    // Only the active node's indicator is one, so the averaged terms are the
    // active node's contributions divided by N.
    let mut delta_sq_sum = 0.0;
    for j in 0..n {
        let on = if j == active { 1.0 } else { 0.0 };
        let mut d = 0.0;
        for c in 0..p {
            let df = true_grad[c] * on - true_grad[c] / nf;
            let dg = hp.a * (cg[c] * on - cg[c] / nf);
            let dn = noise[c] * on - noise[c] / nf;
            let dc = df + dg + dn;
            d += dc * dc;
        }
        delta_sq_sum += d;
    }

    let drift: f64 = e_i
        .iter()
        .zip(true_grad.iter().zip(&cg))
        .map(|(e, (gr, c))| e * (gr + hp.a * c))
        .sum();
    let noise_term = linalg::dot(&e_i, noise);
    let rhs = vbar - 2.0 / nf * hp.gamma * drift - 2.0 / nf * hp.gamma * noise_term
        + hp.gamma * hp.gamma / nf * delta_sq_sum;
    (post.disagreement() - rhs).abs()
}

/// Observer that checks the decomposition on every NR tick and keeps the
/// worst residual relative to `1 + V̄_k`.
#[derive(Debug)]
pub struct Lemma1Checker<'a> {
    graph: &'a Graph,
    hp: HyperParams,
    pre: Option<NrState>,
    pub steps: u64,
    pub max_relative_residual: f64,
}

impl<'a> Lemma1Checker<'a> {
    pub fn new(graph: &'a Graph, hp: HyperParams) -> Self {
        Self {
            graph,
            hp,
            pre: None,
            steps: 0,
            max_relative_residual: 0.0,
        }
    }
}

impl StepObserver for Lemma1Checker<'_> {
    fn before_step(&mut self, _event: &Event, state: &SchemeState) {
        if let SchemeState::Nr(s) = state {
            self.pre = Some(s.clone());
        }
    }

    fn after_step(&mut self, step: &AppliedStep<'_>, state: &SchemeState) {
        if let (Some(pre), SchemeState::Nr(post)) = (self.pre.take(), state) {
            let r = lemma1_residual(&pre, post, self.graph, &self.hp, step.event.node, step.true_grad, step.noise);
            let rel = r / (1.0 + pre.disagreement());
            self.max_relative_residual = self.max_relative_residual.max(rel);
            self.steps += 1;
        }
    }
}

pub const DEFAULT_PLATEAU_FRACTION: f64 = 0.2;

/// Mean of the final `fraction` of a series.
pub fn plateau(series: &[f64], fraction: f64) -> Result<f64> {
    if series.len() < 10 {
        return Err(Error::Domain(format!(
            "plateau needs at least 10 values (got {})",
            series.len()
        )));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Domain(format!("plateau fraction {fraction} not in (0, 1]")));
    }
    let count = ((series.len() as f64 * fraction).round() as usize).clamp(1, series.len());
    let tail = &series[series.len() - count..];
    Ok(tail.iter().sum::<f64>() / count as f64)
}

/// Sample mean and standard error.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
