//! The two update rules driven by the event trace.
//!
//! Federated (FL): one shared parameter; the active node's noisy gradient at
//! the shared parameter is applied directly.
//!
//! Network-regularized (NR): every node keeps its own parameter; the active
//! node steps along its noisy gradient plus `a` times the gradient of the
//! consensus potential `F(θ) = ¼ΣᵢΣⱼ αᵢⱼ‖θᵢ−θⱼ‖²`.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg;
use crate::problems::{LossModel, NoiseSpec, ParameterVector};
use crate::rng;
use crate::streams::{Event, EventTrace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Learning rate `γ > 0`.
    pub gamma: f64,
    /// Regularization weight `a ≥ 0`.
    pub a: f64,
}

impl HyperParams {
    pub fn new(gamma: f64, a: f64) -> Result<Self> {
        let hp = Self { gamma, a };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("learning rate must be > 0 (got {})", self.gamma)));
        }
        if !(self.a >= 0.0 && self.a.is_finite()) {
            return Err(Error::Config(format!("regularization a must be ≥ 0 (got {})", self.a)));
        }
        Ok(())
    }
}

/// Per-node parameters `θ_{i,k}` after `k` ticks.
#[derive(Debug, Clone, PartialEq)]
pub struct NrState {
    thetas: Vec<Vec<f64>>,
    pub k: u64,
}

impl NrState {
    pub fn new(thetas: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = thetas.first() else {
            return Err(Error::Config("NR state needs at least one node".into()));
        };
        let p = first.len();
        if thetas.iter().any(|t| t.len() != p) {
            return Err(Error::Config("all node parameters must share one dimension".into()));
        }
        if thetas.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("initial parameters must be finite".into()));
        }
        Ok(Self { thetas, k: 0 })
    }

    pub fn nodes(&self) -> usize {
        self.thetas.len()
    }

    pub fn dim(&self) -> usize {
        self.thetas[0].len()
    }

    pub fn theta(&self, i: usize) -> &[f64] {
        &self.thetas[i]
    }

    pub fn thetas(&self) -> &[Vec<f64>] {
        &self.thetas
    }

    /// `θ̄ = (1/N)Σθᵢ`.
    pub fn ensemble_average(&self) -> Vec<f64> {
        let n = self.nodes() as f64;
        let mut avg = vec![0.0; self.dim()];
        for t in &self.thetas {
            avg.iter_mut().zip(t).for_each(|(a, v)| *a += v);
        }
        avg.iter_mut().for_each(|a| *a /= n);
        avg
    }

    /// `V̄ = (1/N)Σ‖θᵢ − θ̄‖²`.
    pub fn disagreement(&self) -> f64 {
        let avg = self.ensemble_average();
        self.disagreement_about(&avg)
    }

    pub fn disagreement_about(&self, avg: &[f64]) -> f64 {
        self.thetas
            .iter()
            .map(|t| t.iter().zip(avg).map(|(x, m)| (x - m) * (x - m)).sum::<f64>())
            .sum::<f64>()
            / self.nodes() as f64
    }

    fn check_graph(&self, g: &Graph) -> Result<()> {
        if g.node_count() != self.nodes() {
            return Err(Error::Config(format!(
                "graph has {} nodes but the state has {}",
                g.node_count(),
                self.nodes()
            )));
        }
        Ok(())
    }

    /// In-place form of [`nr_step`]. On divergence the state is left as it was.
    pub fn apply_nr(&mut self, g: &Graph, hp: &HyperParams, node: usize, grad: &[f64]) -> Result<()> {
        self.check_step(node, grad)?;
        let mut cg = vec![0.0; self.dim()];
        consensus_grad_into(&self.thetas, g, node, &mut cg);
        let updated: Vec<f64> = self.thetas[node]
            .iter()
            .zip(grad)
            .zip(&cg)
            .map(|((t, gi), c)| t - hp.gamma * (gi + hp.a * c))
            .collect();
        self.commit(node, updated)
    }

    fn check_step(&self, node: usize, grad: &[f64]) -> Result<()> {
        if node >= self.nodes() {
            return Err(Error::Config(format!("active node {node} out of range")));
        }
        if grad.len() != self.dim() {
            return Err(Error::Config("gradient dimension mismatch".into()));
        }
        Ok(())
    }

    fn commit(&mut self, node: usize, updated: Vec<f64>) -> Result<()> {
        if updated.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { tick: self.k + 1 });
        }
        self.thetas[node] = updated;
        self.k += 1;
        Ok(())
    }
}

/// Shared parameter `θ_k` after `k` ticks.
#[derive(Debug, Clone, PartialEq)]
pub struct FlState {
    pub theta: Vec<f64>,
    pub k: u64,
}

impl FlState {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("initial parameters must be finite".into()));
        }
        Ok(Self { theta, k: 0 })
    }

    pub fn apply_fl(&mut self, hp: &HyperParams, grad: &[f64]) -> Result<()> {
        if grad.len() != self.theta.len() {
            return Err(Error::Config("gradient dimension mismatch".into()));
        }
        let updated: Vec<f64> = self
            .theta
            .iter()
            .zip(grad)
            .map(|(t, g)| t - hp.gamma * g)
            .collect();
        if updated.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { tick: self.k + 1 });
        }
        self.theta = updated;
        self.k += 1;
        Ok(())
    }
}

/// `F(θ) = ¼ΣᵢΣ_{j≠i} αᵢⱼ‖θᵢ − θⱼ‖²`.
pub fn consensus_potential(state: &NrState, g: &Graph) -> Result<f64> {
    state.check_graph(g)?;
    let mut total = 0.0;
    for (i, j) in g.edges() {
        let d: f64 = state.thetas[i]
            .iter()
            .zip(&state.thetas[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        // Each undirected edge appears twice in the double sum.
        total += 2.0 * d;
    }
    Ok(0.25 * total)
}

fn consensus_grad_into(thetas: &[Vec<f64>], g: &Graph, i: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    let ti = &thetas[i];
    for &j in g.neighbors(i) {
        out.iter_mut()
            .zip(ti.iter().zip(&thetas[j]))
            .for_each(|(o, (a, b))| *o += a - b);
    }
}

/// `∇F_i = Σⱼ αᵢⱼ(θᵢ − θⱼ)`.
pub fn consensus_grad(state: &NrState, g: &Graph, node: usize) -> Result<ParameterVector> {
    state.check_graph(g)?;
    if node >= state.nodes() {
        return Err(Error::Config(format!("node {node} out of range")));
    }
    let mut out = vec![0.0; state.dim()];
    consensus_grad_into(&state.thetas, g, node, &mut out);
    ParameterVector::new(out)
}

/// `θᵢ ← θᵢ − γ(gᵢ + a∇Fᵢ)` for the active node only; `k` advances by one.
pub fn nr_step(
    state: &NrState,
    g: &Graph,
    hp: &HyperParams,
    active_node: usize,
    noisy_gradient: &ParameterVector,
) -> Result<NrState> {
    state.check_graph(g)?;
    let mut next = state.clone();
    next.apply_nr(g, hp, active_node, noisy_gradient.as_slice())?;
    Ok(next)
}

/// The same step written as a mixing row: `θᵢ ← Σⱼ Wᵢⱼθⱼ − γgᵢ` with
/// `Wᵢᵢ = 1 − γa·deg(i)` and `Wᵢⱼ = γa·αᵢⱼ`. Rows of `W` sum to one but `W`
/// is not doubly stochastic once only one row is applied per tick.
pub fn nr_step_w_form(
    state: &NrState,
    g: &Graph,
    hp: &HyperParams,
    active_node: usize,
    noisy_gradient: &ParameterVector,
) -> Result<NrState> {
    state.check_graph(g)?;
    state.check_step(active_node, noisy_gradient.as_slice())?;
    let i = active_node;
    let w_self = 1.0 - hp.gamma * hp.a * g.degree(i) as f64;
    let w_nb = hp.gamma * hp.a;
    let mut mixed: Vec<f64> = state.thetas[i].iter().map(|t| w_self * t).collect();
    for &j in g.neighbors(i) {
        mixed
            .iter_mut()
            .zip(&state.thetas[j])
            .for_each(|(m, t)| *m += w_nb * t);
    }
    mixed
        .iter_mut()
        .zip(noisy_gradient.as_slice())
        .for_each(|(m, gi)| *m -= hp.gamma * gi);
    let mut next = state.clone();
    next.commit(i, mixed)?;
    Ok(next)
}

/// `θ ← θ − γgᵢ(θ)`; `k` advances by one.
pub fn fl_step(
    state: &FlState,
    hp: &HyperParams,
    _active_node: usize,
    noisy_gradient: &ParameterVector,
) -> Result<FlState> {
    let mut next = state.clone();
    next.apply_fl(hp, noisy_gradient.as_slice())?;
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Nr,
    Fl,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Nr => "nr",
            Scheme::Fl => "fl",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SchemeState {
    Nr(NrState),
    Fl(FlState),
}

impl SchemeState {
    pub fn k(&self) -> u64 {
        match self {
            SchemeState::Nr(s) => s.k,
            SchemeState::Fl(s) => s.k,
        }
    }

    /// The point whose stationarity is measured: `θ̄` for NR, `θ` for FL.
    pub fn reference_point(&self) -> Vec<f64> {
        match self {
            SchemeState::Nr(s) => s.ensemble_average(),
            SchemeState::Fl(s) => s.theta.clone(),
        }
    }
}

/// Gradient parts applied at one tick.
#[derive(Debug, Clone, Copy)]
pub struct AppliedStep<'a> {
    pub event: &'a Event,
    /// `∇ℓ` at the point the active node differentiated.
    pub true_grad: &'a [f64],
    /// Noise realization `εᵢ,ₖ`.
    pub noise: &'a [f64],
}

/// Per-tick hooks.
pub trait StepObserver {
    fn before_step(&mut self, _event: &Event, _state: &SchemeState) {}
    fn after_step(&mut self, step: &AppliedStep<'_>, state: &SchemeState);
}

impl StepObserver for () {
    fn after_step(&mut self, _: &AppliedStep<'_>, _: &SchemeState) {}
}

impl<A: StepObserver, B: StepObserver> StepObserver for (A, B) {
    fn before_step(&mut self, event: &Event, state: &SchemeState) {
        self.0.before_step(event, state);
        self.1.before_step(event, state);
    }
    fn after_step(&mut self, step: &AppliedStep<'_>, state: &SchemeState) {
        self.0.after_step(step, state);
        self.1.after_step(step, state);
    }
}

/// Everything a trajectory needs besides the initial state.
#[derive(Debug, Clone, Copy)]
pub struct SchemeInputs<'a> {
    pub model: &'a LossModel,
    pub noise: &'a NoiseSpec,
    pub graph: Option<&'a Graph>,
    pub hp: HyperParams,
    pub trace: &'a EventTrace,
}

/// Iterates the scheme of `init` over the trace, calling `observer` every
/// tick. On divergence the error carries the failing tick; the observer has
/// seen every completed tick before it.
pub fn run_scheme(
    init: SchemeState,
    inputs: &SchemeInputs<'_>,
    noise_rng: &mut impl RngCore,
    observer: &mut impl StepObserver,
) -> Result<SchemeState> {
    inputs.hp.validate()?;
    inputs.noise.validate_for(inputs.model)?;
    let n = inputs.noise.nodes();
    let p = inputs.model.dim();
    match &init {
        SchemeState::Nr(s) => {
            let g = inputs
                .graph
                .ok_or_else(|| Error::Config("the NR scheme needs a graph".into()))?;
            s.check_graph(g)?;
            if s.nodes() != n {
                return Err(Error::Config(format!("state has {} nodes, noise spec {n}", s.nodes())));
            }
            if s.dim() != p {
                return Err(Error::Config("state dimension does not match the model".into()));
            }
        }
        SchemeState::Fl(s) => {
            if s.theta.len() != p {
                return Err(Error::Config("state dimension does not match the model".into()));
            }
        }
    }
    if let Some(e) = inputs.trace.events.iter().find(|e| e.node >= n) {
        return Err(Error::Config(format!("trace references node {} of {n}", e.node)));
    }

    let mut state = init;
    let mut grad = vec![0.0; p];
    let mut eps = vec![0.0; p];
    let mut noisy = vec![0.0; p];
    for event in &inputs.trace.events {
        observer.before_step(event, &state);
        let i = event.node;
        match &mut state {
            SchemeState::Nr(s) => {
                let theta = &s.thetas[i];
                inputs.model.grad_into(theta, &mut grad);
                inputs.noise.sample_into(inputs.model, i, theta, noise_rng, &mut eps);
                fill_sum(&mut noisy, &grad, &eps);
                s.apply_nr(inputs.graph.expect("checked above"), &inputs.hp, i, &noisy)?;
            }
            SchemeState::Fl(s) => {
                inputs.model.grad_into(&s.theta, &mut grad);
                inputs.noise.sample_into(inputs.model, i, &s.theta, noise_rng, &mut eps);
                fill_sum(&mut noisy, &grad, &eps);
                s.apply_fl(&inputs.hp, &noisy)?;
            }
        }
        let step = AppliedStep {
            event,
            true_grad: &grad,
            noise: &eps,
        };
        observer.after_step(&step, &state);
    }
    Ok(state)
}

fn fill_sum(out: &mut [f64], a: &[f64], b: &[f64]) {
    out.iter_mut().zip(a.iter().zip(b)).for_each(|(o, (x, y))| *o = x + y);
}

/// How node parameters start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum InitMode {
    /// Every node starts at the centre.
    Equal,
    /// Centre plus i.i.d. `N(0, spread²)` per coordinate and node.
    Gaussian { spread: f64 },
}

impl Default for InitMode {
    fn default() -> Self {
        InitMode::Gaussian { spread: 1.0 }
    }
}

/// Initial NR parameters around `center`.
pub fn init_nr(center: &[f64], nodes: usize, mode: InitMode, rng: &mut impl RngCore) -> Result<NrState> {
    let thetas = (0..nodes)
        .map(|_| match mode {
            InitMode::Equal => center.to_vec(),
            InitMode::Gaussian { spread } => {
                let mut z = vec![0.0; center.len()];
                rng::fill_standard_normal(rng, &mut z);
                center.iter().zip(&z).map(|(c, zi)| c + spread * zi).collect()
            }
        })
        .collect();
    NrState::new(thetas)
}

/// Maximum absolute coordinate difference between two NR states.
pub fn max_coordinate_diff(a: &NrState, b: &NrState) -> f64 {
    a.thetas
        .iter()
        .flatten()
        .zip(b.thetas.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Euclidean norm of `Σᵢ∇Fᵢ`.
pub fn consensus_grad_sum_norm(state: &NrState, g: &Graph) -> Result<f64> {
    state.check_graph(g)?;
    let mut total = vec![0.0; state.dim()];
    let mut cg = vec![0.0; state.dim()];
    for i in 0..state.nodes() {
        consensus_grad_into(&state.thetas, g, i, &mut cg);
        total.iter_mut().zip(&cg).for_each(|(t, c)| *t += c);
    }
    Ok(linalg::norm(&total))
}
