//! JSON experiment configuration and its resolution into simulation objects.

use serde::{Deserialize, Serialize};

use crate::analysis::{BoundParams, RateConvention};
use crate::error::{Error, Result};
use crate::graph::{self, Graph, SpectralSummary};
use crate::linalg::DenseMatrix;
use crate::problems::{LossModel, NoiseSpec, SampleSource};
use crate::rng::{self, Purpose};
use crate::schemes::{HyperParams, InitMode, Scheme};
use crate::streams::NodeRates;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    pub model: ModelConfig,
    pub nodes: usize,
    pub noise: NoiseConfig,
    pub rates: RatesConfig,
    #[serde(default)]
    pub topology: TopologyConfig,
    pub hyper: HyperConfig,
    pub horizon: Horizon,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default = "default_thin")]
    pub thin: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Also emit 2.5% / 97.5% percentile columns in the aggregate CSV.
    #[serde(default)]
    pub percentile_band: bool,
    #[serde(default)]
    pub bound_convention: RateConvention,
    #[serde(default = "default_plateau_fraction")]
    pub plateau_fraction: f64,
    /// Write each trial's event trace as `trace_<i>.csv`.
    #[serde(default)]
    pub export_traces: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

fn default_schemes() -> Vec<Scheme> {
    vec![Scheme::Nr]
}
fn default_trials() -> usize {
    10
}
fn default_thin() -> u64 {
    1
}
fn default_workers() -> usize {
    1
}
fn default_plateau_fraction() -> f64 {
    crate::analysis::DEFAULT_PLATEAU_FRACTION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    /// Either an explicit `q`/`b` pair, or a diagonal spectrum given as
    /// `eigenvalues` or as `dim` + `eig_range` (evenly spaced), minimized at
    /// `minimizer` (default zero).
    Quadratic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        q: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        b: Option<Vec<f64>>,
        #[serde(flatten)]
        spectrum: SpectrumConfig,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        minimizer: Option<Vec<f64>>,
    },
    Logistic {
        dim: usize,
        samples: usize,
        #[serde(default = "default_l2")]
        l2: f64,
        #[serde(default)]
        seed: u64,
    },
    NonconvexSine {
        #[serde(flatten)]
        spectrum: SpectrumConfig,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        minimizer: Option<Vec<f64>>,
        amplitude: f64,
        frequency: f64,
    },
}

fn default_l2() -> f64 {
    0.01
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectrumConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvalues: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eig_range: Option<[f64; 2]>,
}

impl SpectrumConfig {
    fn eigenvalues(&self) -> Result<Vec<f64>> {
        match (&self.eigenvalues, self.dim, self.eig_range) {
            (Some(e), None, None) => Ok(e.clone()),
            (None, Some(dim), Some([lo, hi])) if dim >= 1 => Ok(if dim == 1 {
                vec![hi]
            } else {
                (0..dim)
                    .map(|i| lo + (hi - lo) * i as f64 / (dim - 1) as f64)
                    .collect()
            }),
            _ => Err(Error::Config(
                "give either `eigenvalues` or both `dim` and `eig_range`".into(),
            )),
        }
    }

    fn is_empty(&self) -> bool {
        self.eigenvalues.is_none() && self.dim.is_none() && self.eig_range.is_none()
    }
}

impl ModelConfig {
    pub fn build(&self) -> Result<LossModel> {
        match self {
            ModelConfig::Quadratic {
                q,
                b,
                spectrum,
                minimizer,
            } => match (q, b) {
                (Some(q), Some(b)) => {
                    if !spectrum.is_empty() || minimizer.is_some() {
                        return Err(Error::Config(
                            "quadratic: `q`/`b` cannot be combined with a spectrum or minimizer".into(),
                        ));
                    }
                    LossModel::quadratic(DenseMatrix::from_rows(q)?, b.clone())
                }
                (None, None) => {
                    let eig = spectrum.eigenvalues()?;
                    let star = minimizer.clone().unwrap_or_else(|| vec![0.0; eig.len()]);
                    LossModel::quadratic_diag(&eig, &star)
                }
                _ => Err(Error::Config("quadratic: `q` and `b` go together".into())),
            },
            ModelConfig::Logistic {
                dim,
                samples,
                l2,
                seed,
            } => LossModel::logistic_synthetic(*samples, *dim, *l2, *seed),
            ModelConfig::NonconvexSine {
                spectrum,
                minimizer,
                amplitude,
                frequency,
            } => {
                let eig = spectrum.eigenvalues()?;
                let star = minimizer.clone().unwrap_or_else(|| vec![0.0; eig.len()]);
                LossModel::nonconvex_sine(&eig, &star, *amplitude, *frequency)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseConfig {
    /// Per-node `sigmas`, or one `sigma` for every node.
    Gaussian {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigmas: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma: Option<f64>,
    },
    /// Per-node `batch_sizes`, or one `batch_size` for every node. Samples
    /// come from the model's data for logistic models and from a shared
    /// perturbation table otherwise.
    Minibatch {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        batch_sizes: Option<Vec<usize>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        batch_size: Option<usize>,
        #[serde(default = "default_table_size")]
        table_size: usize,
        #[serde(default = "default_sample_scale")]
        sample_scale: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_table_size() -> usize {
    1024
}
fn default_sample_scale() -> f64 {
    1.0
}

fn per_node<T: Clone>(what: &str, list: &Option<Vec<T>>, single: &Option<T>, n: usize) -> Result<Vec<T>> {
    match (list, single) {
        (Some(v), None) if v.len() == n => Ok(v.clone()),
        (Some(v), None) => Err(Error::Config(format!(
            "{what}: {} values given for {n} nodes",
            v.len()
        ))),
        (None, Some(x)) => Ok(vec![x.clone(); n]),
        _ => Err(Error::Config(format!("{what}: give exactly one of the list or the single value"))),
    }
}

impl NoiseConfig {
    pub fn build(&self, model: &LossModel, nodes: usize) -> Result<NoiseSpec> {
        let spec = match self {
            NoiseConfig::Gaussian { sigmas, sigma } => {
                NoiseSpec::gaussian(per_node("noise sigmas", sigmas, sigma, nodes)?)?
            }
            NoiseConfig::Minibatch {
                batch_sizes,
                batch_size,
                table_size,
                sample_scale,
                seed,
            } => {
                let sizes = per_node("batch sizes", batch_sizes, batch_size, nodes)?;
                let source = if model.sample_count().is_some() {
                    SampleSource::ModelSamples
                } else {
                    SampleSource::perturbation_table(*table_size, model.dim(), *sample_scale, *seed)?
                };
                NoiseSpec::minibatch(sizes, source)?
            }
        };
        spec.validate_for(model)?;
        Ok(spec)
    }

    /// Whether every node gets the same noise level.
    pub fn is_uniform(&self) -> bool {
        match self {
            NoiseConfig::Gaussian { sigma, .. } => sigma.is_some(),
            NoiseConfig::Minibatch { batch_size, .. } => batch_size.is_some(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RatesConfig {
    Uniform(f64),
    PerNode(Vec<f64>),
}

impl RatesConfig {
    pub fn build(&self, nodes: usize) -> Result<NodeRates> {
        match self {
            RatesConfig::Uniform(r) => NodeRates::uniform(nodes, *r),
            RatesConfig::PerNode(v) if v.len() == nodes => NodeRates::new(v.clone()),
            RatesConfig::PerNode(v) => Err(Error::Config(format!(
                "rates: {} values given for {nodes} nodes",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologyConfig {
    #[default]
    Complete,
    Ring {
        k: usize,
    },
    WattsStrogatz {
        k: usize,
        #[serde(default)]
        beta: f64,
    },
    Edges {
        edges: Vec<(usize, usize)>,
    },
}

impl TopologyConfig {
    /// Builds the graph; Watts–Strogatz draws from the experiment's graph
    /// stream so every trial shares one topology.
    pub fn build(&self, nodes: usize, master_seed: u64) -> Result<Graph> {
        match self {
            TopologyConfig::Complete => Graph::complete(nodes),
            TopologyConfig::Ring { k } => Graph::ring_lattice(nodes, *k),
            TopologyConfig::WattsStrogatz { k, beta } => {
                let mut r = rng::derive_rng(master_seed, 0, Purpose::Graph);
                Graph::watts_strogatz(nodes, *k, *beta, &mut r)
            }
            TopologyConfig::Edges { edges } => Graph::from_edges(nodes, edges),
        }
    }

    pub fn label(&self) -> String {
        match self {
            TopologyConfig::Complete => "complete".into(),
            TopologyConfig::Ring { k } => format!("ring_k{k}"),
            TopologyConfig::WattsStrogatz { k, beta } => format!("ws_k{k}_b{beta}"),
            TopologyConfig::Edges { edges } => format!("edges_{}", edges.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperConfig {
    /// Fixed learning rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Learning rate `c/N`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_per_node: Option<f64>,
    pub a: f64,
}

impl HyperConfig {
    pub fn build(&self, nodes: usize) -> Result<HyperParams> {
        let gamma = match (self.gamma, self.gamma_per_node) {
            (Some(g), None) => g,
            (None, Some(c)) => c / nodes as f64,
            _ => {
                return Err(Error::Config(
                    "hyper: give exactly one of `gamma` and `gamma_per_node`".into(),
                ))
            }
        };
        HyperParams::new(gamma, self.a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    /// Fixed number of ticks.
    Ticks(u64),
    /// Real-time horizon; each trial runs to the last arrival before it.
    Time(f64),
}

impl Horizon {
    /// Ticks for fixed-length runs, `μT` (the expected count) otherwise.
    pub fn expected_ticks(&self, mu_total: f64) -> f64 {
        match *self {
            Horizon::Ticks(k) => k as f64,
            Horizon::Time(t) => mu_total * t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CenterConfig {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    #[serde(flatten)]
    pub mode: InitMode,
    #[serde(default = "default_center")]
    pub center: CenterConfig,
}

fn default_center() -> CenterConfig {
    CenterConfig::Scalar(1.0)
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            mode: InitMode::default(),
            center: default_center(),
        }
    }
}

impl InitConfig {
    pub fn center(&self, dim: usize) -> Result<Vec<f64>> {
        match &self.center {
            CenterConfig::Scalar(c) => Ok(vec![*c; dim]),
            CenterConfig::Vector(v) if v.len() == dim => Ok(v.clone()),
            CenterConfig::Vector(v) => Err(Error::Config(format!(
                "init center has {} entries, model dimension is {dim}",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", content = "values", rename_all = "snake_case")]
pub enum SweepConfig {
    A(Vec<f64>),
    Gamma(Vec<f64>),
    N(Vec<usize>),
    Topology(Vec<TopologyConfig>),
}

impl SweepConfig {
    pub fn len(&self) -> usize {
        match self {
            SweepConfig::A(v) | SweepConfig::Gamma(v) => v.len(),
            SweepConfig::N(v) => v.len(),
            SweepConfig::Topology(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn axis_name(&self) -> &'static str {
        match self {
            SweepConfig::A(_) => "a",
            SweepConfig::Gamma(_) => "gamma",
            SweepConfig::N(_) => "n",
            SweepConfig::Topology(_) => "topology",
        }
    }

    /// Config for sweep point `idx` and its label.
    pub fn apply(&self, base: &ExperimentConfig, idx: usize) -> Result<(ExperimentConfig, String)> {
        let mut cfg = base.clone();
        cfg.sweep = None;
        let label = match self {
            SweepConfig::A(v) => {
                cfg.hyper.a = v[idx];
                format!("{}", v[idx])
            }
            SweepConfig::Gamma(v) => {
                cfg.hyper.gamma = Some(v[idx]);
                cfg.hyper.gamma_per_node = None;
                format!("{}", v[idx])
            }
            SweepConfig::N(v) => {
                if !matches!(cfg.rates, RatesConfig::Uniform(_)) || !cfg.noise.is_uniform() {
                    return Err(Error::Config(
                        "an n sweep needs uniform `rates` and a single noise level".into(),
                    ));
                }
                cfg.nodes = v[idx];
                format!("{}", v[idx])
            }
            SweepConfig::Topology(v) => {
                cfg.topology = v[idx].clone();
                v[idx].label()
            }
        };
        Ok((cfg, label))
    }
}

/// A validated configuration with every simulation object built.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub model: LossModel,
    pub noise: NoiseSpec,
    pub rates: NodeRates,
    pub graph: Graph,
    pub spectral: SpectralSummary,
    pub hp: HyperParams,
    pub center: Vec<f64>,
    /// `σᵢ²` at the initial centre.
    pub sigmas_sq: Vec<f64>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON form, hex encoded.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Checks every precondition and builds the simulation objects.
    pub fn resolve(&self) -> Result<Experiment> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("at least one scheme is required".into()));
        }
        if self.nodes < 2 {
            return Err(Error::Config("at least two nodes are required".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be ≥ 1".into()));
        }
        if self.thin == 0 || self.workers == 0 {
            return Err(Error::Config("thin and workers must be ≥ 1".into()));
        }
        if !(self.plateau_fraction > 0.0 && self.plateau_fraction <= 1.0) {
            return Err(Error::Config("plateau_fraction must be in (0, 1]".into()));
        }
        match self.horizon {
            Horizon::Ticks(0) => return Err(Error::Config("tick horizon must be ≥ 1".into())),
            Horizon::Ticks(_) => {}
            Horizon::Time(t) if t > 0.0 && t.is_finite() => {}
            Horizon::Time(t) => return Err(Error::Config(format!("time horizon {t} must be positive"))),
        }
        if let InitMode::Gaussian { spread } = self.init.mode {
            if !(spread >= 0.0 && spread.is_finite()) {
                return Err(Error::Config("init spread must be ≥ 0".into()));
            }
        }
        let model = self.model.build()?;
        let noise = self.noise.build(&model, self.nodes)?;
        let rates = self.rates.build(self.nodes)?;
        let graph = self.topology.build(self.nodes, self.seed)?;
        let spectral = graph::spectral(&graph)?;
        let hp = self.hyper.build(self.nodes)?;
        let center = self.init.center(model.dim())?;
        let sigmas_sq = (0..self.nodes)
            .map(|i| noise.variance(&model, i, &center))
            .collect();
        Ok(Experiment {
            config: self.clone(),
            model,
            noise,
            rates,
            graph,
            spectral,
            hp,
            center,
            sigmas_sq,
        })
    }
}

impl Experiment {
    pub fn sigma_sq_total(&self) -> f64 {
        self.sigmas_sq.iter().sum()
    }

    pub fn bound_params(&self) -> BoundParams {
        BoundParams::new(
            self.model.lipschitz_const(),
            self.spectral.lambda2,
            self.spectral.max_degree,
            &self.rates,
            self.sigma_sq_total(),
            self.hp,
        )
        .with_convention(self.config.bound_convention)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn base_json() -> String {
        r#"{
            "schema_version": 1,
            "model": {"kind": "quadratic", "dim": 4, "eig_range": [0.5, 1.0]},
            "nodes": 3,
            "noise": {"model": "gaussian", "sigma": 1.0},
            "rates": 1.0,
            "hyper": {"gamma": 0.01, "a": 1.0},
            "horizon": {"ticks": 10},
            "trials": 2
        }"#
        .into()
    }

    #[test]
    fn parses_and_resolves_defaults() {
        let cfg = ExperimentConfig::from_json(&base_json()).unwrap();
        assert_eq!(cfg.schemes, vec![Scheme::Nr]);
        assert_eq!(cfg.topology, TopologyConfig::Complete);
        assert_eq!(cfg.init.mode, InitMode::Gaussian { spread: 1.0 });
        let exp = cfg.resolve().unwrap();
        assert_eq!(exp.model.dim(), 4);
        assert_eq!(exp.center, vec![1.0; 4]);
        assert!((exp.spectral.lambda2 - 3.0).abs() < 1e-10);
        assert_eq!(exp.sigmas_sq, vec![1.0; 3]);
    }

    #[test]
    fn resolved_config_roundtrips() {
        let cfg = ExperimentConfig::from_json(&base_json()).unwrap();
        let again = ExperimentConfig::from_json(&cfg.to_json_pretty()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.content_hash(), again.content_hash());
        assert_eq!(cfg.content_hash().len(), 64);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad_version = base_json().replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(ExperimentConfig::from_json(&bad_version).unwrap().resolve().is_err());
        let unknown = base_json().replace("\"trials\": 2", "\"trials\": 2, \"bogus\": 1");
        assert!(ExperimentConfig::from_json(&unknown).is_err());
        let bad_rates = base_json().replace("\"rates\": 1.0", "\"rates\": [1.0, 2.0]");
        assert!(ExperimentConfig::from_json(&bad_rates).unwrap().resolve().is_err());
        let both_gamma = base_json().replace("\"gamma\": 0.01", "\"gamma\": 0.01, \"gamma_per_node\": 0.1");
        assert!(ExperimentConfig::from_json(&both_gamma).unwrap().resolve().is_err());
    }

    #[test]
    fn gamma_per_node_scales() {
        let json = base_json().replace("\"gamma\": 0.01", "\"gamma_per_node\": 0.3");
        let exp = ExperimentConfig::from_json(&json).unwrap().resolve().unwrap();
        assert!((exp.hp.gamma - 0.1).abs() < 1e-15);
    }

    #[test]
    fn sweep_points() {
        let json = base_json().replace(
            "\"trials\": 2",
            "\"trials\": 2, \"sweep\": {\"axis\": \"n\", \"values\": [4, 8]}",
        );
        let cfg = ExperimentConfig::from_json(&json).unwrap();
        let sweep = cfg.sweep.clone().unwrap();
        let (c1, label) = sweep.apply(&cfg, 1).unwrap();
        assert_eq!(c1.nodes, 8);
        assert_eq!(label, "8");
        assert!(c1.sweep.is_none());

        let topo: SweepConfig =
            serde_json::from_str(r#"{"axis": "topology", "values": [{"kind": "ring", "k": 2}]}"#).unwrap();
        assert_eq!(topo.apply(&cfg, 0).unwrap().1, "ring_k2");
    }

    #[test]
    fn model_variants_build() {
        let sine: ModelConfig = serde_json::from_str(
            r#"{"kind": "nonconvex_sine", "eigenvalues": [1.0, 2.0], "amplitude": 0.5, "frequency": 2.0}"#,
        )
        .unwrap();
        assert!((sine.build().unwrap().lipschitz_const() - 4.0).abs() < 1e-9);
        let logi: ModelConfig =
            serde_json::from_str(r#"{"kind": "logistic", "dim": 3, "samples": 50}"#).unwrap();
        assert_eq!(logi.build().unwrap().dim(), 3);
        let explicit: ModelConfig = serde_json::from_str(
            r#"{"kind": "quadratic", "q": [[2.0, 0.0], [0.0, 1.0]], "b": [2.0, 1.0]}"#,
        )
        .unwrap();
        assert_eq!(explicit.build().unwrap().known_minimizer().unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn minibatch_noise_uses_table_for_quadratic() {
        let json = base_json().replace(
            r#"{"model": "gaussian", "sigma": 1.0}"#,
            r#"{"model": "minibatch", "batch_sizes": [1, 4, 4], "sample_scale": 2.0}"#,
        );
        let exp = ExperimentConfig::from_json(&json).unwrap().resolve().unwrap();
        assert!((exp.sigmas_sq[0] / exp.sigmas_sq[1] - 4.0).abs() < 1e-9);
    }
}
