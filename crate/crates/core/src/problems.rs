//! Loss models with exact gradients and per-node gradient noise.
//!
//! Every model is shifted so its minimum value is zero, has an exactly
//! computable gradient and a known global Lipschitz constant for that
//! gradient. Noise is added to the exact gradient, so the expected noisy
//! gradient is the same at every node.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix};
use crate::rng;

/// Point in parameter space. Entries are always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "parameter entry {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(&self.0)
    }
}

impl TryFrom<Vec<f64>> for ParameterVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ParameterVector> for Vec<f64> {
    fn from(p: ParameterVector) -> Self {
        p.0
    }
}

impl AsRef<[f64]> for ParameterVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Quadratic,
    Logistic,
    NonconvexSine,
}

#[derive(Debug, Clone)]
enum Objective {
    /// `½(θ−θ*)ᵀQ(θ−θ*)`, equal to `½θᵀQθ − bᵀθ` minus its minimum.
    Quadratic {
        q: DenseMatrix,
        b: Vec<f64>,
        minimizer: Vec<f64>,
    },
    /// Quadratic plus `c·Σₖ(1 − cos(ω(θₖ−θ*ₖ)))`.
    NonconvexSine {
        q: DenseMatrix,
        minimizer: Vec<f64>,
        amplitude: f64,
        frequency: f64,
    },
    /// Mean logistic loss over a fixed design with ±1 labels, plus `l2/2·‖θ‖²`.
    Logistic {
        features: Vec<Vec<f64>>,
        labels: Vec<f64>,
        l2: f64,
    },
}

/// A differentiable objective `ℓ(θ) ≥ 0` with an `L`-Lipschitz gradient.
#[derive(Debug, Clone)]
pub struct LossModel {
    dim: usize,
    objective: Objective,
    lipschitz: f64,
}

/// Relative tolerance for deciding that `b` lies in the range of `Q`.
const RANGE_TOL: f64 = 1e-9;

impl LossModel {
    /// `½θᵀQθ − bᵀθ`, shifted by its minimum. `Q` must be symmetric PSD and
    /// `b` must lie in its range, otherwise the loss is unbounded below.
    pub fn quadratic(q: DenseMatrix, b: Vec<f64>) -> Result<Self> {
        let dim = q.dim();
        check_len("b", b.len(), dim)?;
        if !q.is_symmetric(1e-12) {
            return Err(Error::Config("quadratic matrix Q is not symmetric".into()));
        }
        let eig = linalg::jacobi_eigen(&q)?;
        let scale = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        if eig.values[0] < -1e-12 * scale {
            return Err(Error::Config(format!(
                "quadratic matrix Q is not positive semidefinite (eigenvalue {})",
                eig.values[0]
            )));
        }
        // θ* = Q⁺b through the eigendecomposition.
        let mut minimizer = vec![0.0; dim];
        for (lambda, v) in eig.values.iter().zip(&eig.vectors) {
            if *lambda > 1e-12 * scale {
                let coef = linalg::dot(v, &b) / lambda;
                minimizer.iter_mut().zip(v).for_each(|(m, vi)| *m += coef * vi);
            }
        }
        let qm = q.mul_vec(&minimizer);
        let resid: f64 = qm.iter().zip(&b).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
        if resid > RANGE_TOL * (1.0 + linalg::norm(&b)) {
            return Err(Error::Config(
                "b is not in the range of Q; the quadratic is unbounded below".into(),
            ));
        }
        // The Rayleigh quotient approaches λ_max from below; never under-report L.
        let lipschitz = linalg::power_iteration(&q)?.max(eig.values[dim - 1]);
        Ok(Self {
            dim,
            objective: Objective::Quadratic { q, b, minimizer },
            lipschitz,
        })
    }

    /// Quadratic with diagonal `Q = diag(eigenvalues)` minimized at `minimizer`.
    pub fn quadratic_diag(eigenvalues: &[f64], minimizer: &[f64]) -> Result<Self> {
        check_len("minimizer", minimizer.len(), eigenvalues.len())?;
        let q = DenseMatrix::from_diagonal(eigenvalues);
        let b = q.mul_vec(minimizer);
        let mut model = Self::quadratic(q, b)?;
        if let Objective::Quadratic { minimizer: m, .. } = &mut model.objective {
            *m = minimizer.to_vec();
        }
        Ok(model)
    }

    /// Quadratic with a sinusoidal ripple; non-convex once `c·ω²` exceeds the
    /// smallest eigenvalue of `Q`. `minimizer` is the global minimizer.
    pub fn nonconvex_sine(
        eigenvalues: &[f64],
        minimizer: &[f64],
        amplitude: f64,
        frequency: f64,
    ) -> Result<Self> {
        check_len("minimizer", minimizer.len(), eigenvalues.len())?;
        if eigenvalues.iter().any(|&l| l < 0.0 || !l.is_finite()) {
            return Err(Error::Config("eigenvalues must be nonnegative".into()));
        }
        if !(amplitude >= 0.0 && amplitude.is_finite() && frequency.is_finite()) {
            return Err(Error::Config("sine amplitude must be ≥ 0 and finite".into()));
        }
        let q = DenseMatrix::from_diagonal(eigenvalues);
        let lipschitz = linalg::power_iteration(&q)? + amplitude * frequency * frequency;
        Ok(Self {
            dim: eigenvalues.len(),
            objective: Objective::NonconvexSine {
                q,
                minimizer: minimizer.to_vec(),
                amplitude,
                frequency,
            },
            lipschitz,
        })
    }

    /// Logistic regression on an explicit design. Labels must be ±1.
    pub fn logistic(features: Vec<Vec<f64>>, labels: Vec<f64>, l2: f64) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Config("logistic model needs at least one sample".into()));
        }
        check_len("labels", labels.len(), features.len())?;
        let dim = features[0].len();
        if features.iter().any(|r| r.len() != dim) {
            return Err(Error::Config("ragged logistic design matrix".into()));
        }
        if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::Config("logistic labels must be +1 or -1".into()));
        }
        if !(l2 >= 0.0 && l2.is_finite()) {
            return Err(Error::Config("l2 must be ≥ 0".into()));
        }
        let mut gram = DenseMatrix::gram(&features, dim);
        gram.scale(1.0 / features.len() as f64);
        let lipschitz = 0.25 * linalg::power_iteration(&gram)? + l2;
        Ok(Self {
            dim,
            objective: Objective::Logistic {
                features,
                labels,
                l2,
            },
            lipschitz,
        })
    }

    /// Synthetic logistic problem: Gaussian features, labels from a random
    /// hyperplane with label noise.
    pub fn logistic_synthetic(samples: usize, dim: usize, l2: f64, seed: u64) -> Result<Self> {
        if samples == 0 || dim == 0 {
            return Err(Error::Config("logistic model needs samples ≥ 1 and dim ≥ 1".into()));
        }
        let mut r = rng::rng_from_seed(seed);
        let truth: Vec<f64> = (0..dim).map(|_| rng::standard_normal(&mut r)).collect();
        let mut features = Vec::with_capacity(samples);
        let mut labels = Vec::with_capacity(samples);
        for _ in 0..samples {
            let x: Vec<f64> = (0..dim).map(|_| rng::standard_normal(&mut r)).collect();
            let margin = linalg::dot(&x, &truth) + 0.5 * rng::standard_normal(&mut r);
            labels.push(if margin >= 0.0 { 1.0 } else { -1.0 });
            features.push(x);
        }
        Self::logistic(features, labels, l2)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> ModelKind {
        match self.objective {
            Objective::Quadratic { .. } => ModelKind::Quadratic,
            Objective::NonconvexSine { .. } => ModelKind::NonconvexSine,
            Objective::Logistic { .. } => ModelKind::Logistic,
        }
    }

    /// Global minimizer when it is known in closed form.
    pub fn known_minimizer(&self) -> Option<&[f64]> {
        match &self.objective {
            Objective::Quadratic { minimizer, .. } | Objective::NonconvexSine { minimizer, .. } => {
                Some(minimizer)
            }
            Objective::Logistic { .. } => None,
        }
    }

    /// Linear term `b` of the quadratic form, when there is one.
    pub fn linear_term(&self) -> Option<&[f64]> {
        match &self.objective {
            Objective::Quadratic { b, .. } => Some(b),
            _ => None,
        }
    }

    pub fn lipschitz_const(&self) -> f64 {
        self.lipschitz
    }

    pub fn check_dim(&self, theta: &[f64]) -> Result<()> {
        check_len("theta", theta.len(), self.dim)
    }

    pub fn loss_eval(&self, theta: &ParameterVector) -> Result<f64> {
        self.check_dim(theta.as_slice())?;
        Ok(self.loss(theta.as_slice()))
    }

    pub fn grad_eval(&self, theta: &ParameterVector) -> Result<ParameterVector> {
        self.check_dim(theta.as_slice())?;
        let mut g = vec![0.0; self.dim];
        self.grad_into(theta.as_slice(), &mut g);
        ParameterVector::new(g)
    }

    /// Loss on a raw slice; the caller guarantees the dimension.
    pub fn loss(&self, theta: &[f64]) -> f64 {
        let value = match &self.objective {
            Objective::Quadratic { q, minimizer, .. } => quad_form(q, theta, minimizer),
            Objective::NonconvexSine {
                q,
                minimizer,
                amplitude,
                frequency,
            } => {
                let ripple: f64 = theta
                    .iter()
                    .zip(minimizer)
                    .map(|(t, m)| 1.0 - (frequency * (t - m)).cos())
                    .sum();
                quad_form(q, theta, minimizer) + amplitude * ripple
            }
            Objective::Logistic {
                features,
                labels,
                l2,
            } => {
                let data: f64 = features
                    .iter()
                    .zip(labels)
                    .map(|(x, y)| softplus(-y * linalg::dot(x, theta)))
                    .sum::<f64>()
                    / features.len() as f64;
                data + 0.5 * l2 * linalg::norm_sq(theta)
            }
        };
        // Rounding can push an exact zero slightly negative.
        value.max(0.0)
    }

    /// Exact gradient written into `out`.
    pub fn grad_into(&self, theta: &[f64], out: &mut [f64]) {
        match &self.objective {
            Objective::Quadratic { q, minimizer, .. } => quad_grad(q, theta, minimizer, out),
            Objective::NonconvexSine {
                q,
                minimizer,
                amplitude,
                frequency,
            } => {
                quad_grad(q, theta, minimizer, out);
                for ((o, t), m) in out.iter_mut().zip(theta).zip(minimizer) {
                    *o += amplitude * frequency * (frequency * (t - m)).sin();
                }
            }
            Objective::Logistic {
                features,
                labels,
                l2,
            } => {
                out.iter_mut().zip(theta).for_each(|(o, t)| *o = l2 * t);
                let inv_n = 1.0 / features.len() as f64;
                for (x, y) in features.iter().zip(labels) {
                    let w = -y * sigmoid(-y * linalg::dot(x, theta)) * inv_n;
                    out.iter_mut().zip(x).for_each(|(o, xi)| *o += w * xi);
                }
            }
        }
    }

    /// Number of per-sample loss terms when the objective is an empirical mean.
    pub fn sample_count(&self) -> Option<usize> {
        match &self.objective {
            Objective::Logistic { features, .. } => Some(features.len()),
            _ => None,
        }
    }

    /// Gradient of sample `idx`'s loss term (including the ridge term).
    fn sample_grad_into(&self, idx: usize, theta: &[f64], out: &mut [f64]) {
        match &self.objective {
            Objective::Logistic {
                features,
                labels,
                l2,
            } => {
                let x = &features[idx];
                let y = labels[idx];
                let w = -y * sigmoid(-y * linalg::dot(x, theta));
                out.iter_mut()
                    .zip(x)
                    .zip(theta)
                    .for_each(|((o, xi), t)| *o = w * xi + l2 * t);
            }
            _ => unreachable!("per-sample gradients only exist for empirical-mean models"),
        }
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Config(format!(
            "dimension mismatch: {what} has length {got}, expected {want}"
        )));
    }
    Ok(())
}

fn quad_form(q: &DenseMatrix, theta: &[f64], center: &[f64]) -> f64 {
    let d: Vec<f64> = theta.iter().zip(center).map(|(t, c)| t - c).collect();
    0.5 * linalg::dot(&d, &q.mul_vec(&d))
}

fn quad_grad(q: &DenseMatrix, theta: &[f64], center: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = q
            .row(i)
            .iter()
            .zip(theta.iter().zip(center))
            .map(|(qij, (t, c))| qij * (t - c))
            .sum();
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Central-difference gradient with step `h` per coordinate.
pub fn finite_diff_grad(model: &LossModel, theta: &ParameterVector, h: f64) -> Result<ParameterVector> {
    model.check_dim(theta.as_slice())?;
    if !(h > 0.0) {
        return Err(Error::Domain("finite-difference step must be positive".into()));
    }
    let mut x = theta.as_slice().to_vec();
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let up = model.loss(&x);
        x[i] = orig - h;
        let down = model.loss(&x);
        x[i] = orig;
        g[i] = (up - down) / (2.0 * h);
    }
    ParameterVector::new(g)
}

/// Default finite-difference step `1e−6·(1+‖θ‖)`.
pub fn default_fd_step(theta: &ParameterVector) -> f64 {
    1e-6 * (1.0 + theta.norm())
}

/// Where minibatch samples come from.
#[derive(Debug, Clone)]
pub enum SampleSource {
    /// The model's own data rows (logistic models).
    ModelSamples,
    /// A shared table of centered perturbation vectors `z_m`; sample `m`'s
    /// gradient is `∇ℓ(θ) − z_m`.
    Perturbations(Vec<Vec<f64>>),
}

impl SampleSource {
    /// `M` centered Gaussian vectors with `E‖z‖² ≈ scale²`, drawn from `seed`.
    pub fn perturbation_table(size: usize, dim: usize, scale: f64, seed: u64) -> Result<Self> {
        if size < 2 {
            return Err(Error::Config("perturbation table needs at least 2 rows".into()));
        }
        let mut r = rng::rng_from_seed(seed);
        let sd = scale / (dim as f64).sqrt();
        let mut rows: Vec<Vec<f64>> = (0..size)
            .map(|_| (0..dim).map(|_| sd * rng::standard_normal(&mut r)).collect())
            .collect();
        let mut mean = vec![0.0; dim];
        for row in &rows {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v / size as f64);
        }
        for row in &mut rows {
            row.iter_mut().zip(&mean).for_each(|(v, m)| *v -= m);
        }
        Ok(Self::Perturbations(rows))
    }
}

#[derive(Debug, Clone)]
pub enum NoiseModel {
    /// `εᵢ ~ N(0, σᵢ²/p · I)`, so `E‖εᵢ‖² = σᵢ²`.
    IsotropicGaussian { sigmas: Vec<f64> },
    /// Node `i` averages `bᵢ` per-sample gradients drawn with replacement.
    Minibatch {
        batch_sizes: Vec<usize>,
        source: SampleSource,
    },
}

/// Per-node gradient noise.
#[derive(Debug, Clone)]
pub struct NoiseSpec {
    model: NoiseModel,
}

impl NoiseSpec {
    pub fn gaussian(sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.is_empty() {
            return Err(Error::Config("noise spec needs at least one node".into()));
        }
        if sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::Config("noise standard deviations must be ≥ 0".into()));
        }
        Ok(Self {
            model: NoiseModel::IsotropicGaussian { sigmas },
        })
    }

    pub fn minibatch(batch_sizes: Vec<usize>, source: SampleSource) -> Result<Self> {
        if batch_sizes.is_empty() {
            return Err(Error::Config("noise spec needs at least one node".into()));
        }
        if batch_sizes.contains(&0) {
            return Err(Error::Config("batch sizes must be ≥ 1".into()));
        }
        Ok(Self {
            model: NoiseModel::Minibatch {
                batch_sizes,
                source,
            },
        })
    }

    pub fn nodes(&self) -> usize {
        match &self.model {
            NoiseModel::IsotropicGaussian { sigmas } => sigmas.len(),
            NoiseModel::Minibatch { batch_sizes, .. } => batch_sizes.len(),
        }
    }

    pub fn model(&self) -> &NoiseModel {
        &self.model
    }

    /// Checks that the noise source is usable with `model`.
    pub fn validate_for(&self, model: &LossModel) -> Result<()> {
        if let NoiseModel::Minibatch { source, .. } = &self.model {
            match source {
                SampleSource::ModelSamples if model.sample_count().is_none() => {
                    return Err(Error::Config(
                        "minibatch noise from model samples needs a logistic model".into(),
                    ))
                }
                SampleSource::Perturbations(rows) if rows.iter().any(|r| r.len() != model.dim()) => {
                    return Err(Error::Config("perturbation table dimension mismatch".into()))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// `E‖εᵢ(θ)‖²` in closed form.
    ///
    /// Exact and θ-independent for Gaussian noise and perturbation tables.
    /// For model samples it is the exact minibatch variance at `theta`.
    pub fn variance(&self, model: &LossModel, node: usize, theta: &[f64]) -> f64 {
        match &self.model {
            NoiseModel::IsotropicGaussian { sigmas } => sigmas[node] * sigmas[node],
            NoiseModel::Minibatch {
                batch_sizes,
                source,
            } => {
                let b = batch_sizes[node] as f64;
                match source {
                    SampleSource::Perturbations(rows) => {
                        rows.iter().map(|r| linalg::norm_sq(r)).sum::<f64>() / rows.len() as f64 / b
                    }
                    SampleSource::ModelSamples => {
                        let n = model.sample_count().unwrap_or(1);
                        let mut full = vec![0.0; model.dim()];
                        model.grad_into(theta, &mut full);
                        let mut g = vec![0.0; model.dim()];
                        let mut total = 0.0;
                        for m in 0..n {
                            model.sample_grad_into(m, theta, &mut g);
                            total += g.iter().zip(&full).map(|(a, c)| (a - c) * (a - c)).sum::<f64>();
                        }
                        total / n as f64 / b
                    }
                }
            }
        }
    }

    /// Whether [`NoiseSpec::variance`] depends on θ (and so is a measured
    /// rather than a guaranteed bound).
    pub fn variance_is_measured(&self) -> bool {
        matches!(
            self.model,
            NoiseModel::Minibatch {
                source: SampleSource::ModelSamples,
                ..
            }
        )
    }

    /// Draws `εᵢ(θ)` into `out`. Consumes a fixed number of `u64` draws per
    /// call for a given node: `2⌈p/2⌉` (Gaussian) or `bᵢ` (minibatch).
    pub fn sample_into(
        &self,
        model: &LossModel,
        node: usize,
        theta: &[f64],
        rng: &mut impl RngCore,
        out: &mut [f64],
    ) {
        match &self.model {
            NoiseModel::IsotropicGaussian { sigmas } => {
                rng::fill_standard_normal(rng, out);
                let sd = sigmas[node] / (out.len() as f64).sqrt();
                out.iter_mut().for_each(|v| *v *= sd);
            }
            NoiseModel::Minibatch {
                batch_sizes,
                source,
            } => {
                let b = batch_sizes[node];
                out.iter_mut().for_each(|v| *v = 0.0);
                match source {
                    SampleSource::Perturbations(rows) => {
                        for _ in 0..b {
                            let z = &rows[rng::index(rng, rows.len())];
                            out.iter_mut().zip(z).for_each(|(o, zi)| *o -= zi / b as f64);
                        }
                    }
                    SampleSource::ModelSamples => {
                        let n = model.sample_count().unwrap_or(1);
                        let mut g = vec![0.0; model.dim()];
                        for _ in 0..b {
                            model.sample_grad_into(rng::index(rng, n), theta, &mut g);
                            out.iter_mut().zip(&g).for_each(|(o, gi)| *o += gi / b as f64);
                        }
                        let mut full = vec![0.0; model.dim()];
                        model.grad_into(theta, &mut full);
                        out.iter_mut().zip(&full).for_each(|(o, f)| *o -= f);
                    }
                }
            }
        }
    }
}

/// `gᵢ(θ) = ∇ℓ(θ) + εᵢ(θ)`.
pub fn noisy_grad(
    model: &LossModel,
    noise: &NoiseSpec,
    node: usize,
    theta: &ParameterVector,
    rng: &mut impl RngCore,
) -> Result<ParameterVector> {
    let (grad, eps) = noisy_grad_parts(model, noise, node, theta, rng)?;
    let g: Vec<f64> = grad.iter().zip(&eps).map(|(a, b)| a + b).collect();
    ParameterVector::new(g)
}

/// Exact gradient and noise realization, returned separately.
pub fn noisy_grad_parts(
    model: &LossModel,
    noise: &NoiseSpec,
    node: usize,
    theta: &ParameterVector,
    rng: &mut impl RngCore,
) -> Result<(Vec<f64>, Vec<f64>)> {
    model.check_dim(theta.as_slice())?;
    if node >= noise.nodes() {
        return Err(Error::Config(format!(
            "node {node} out of range for {} noise sources",
            noise.nodes()
        )));
    }
    let mut grad = vec![0.0; model.dim()];
    model.grad_into(theta.as_slice(), &mut grad);
    let mut eps = vec![0.0; model.dim()];
    noise.sample_into(model, node, theta.as_slice(), rng, &mut eps);
    Ok((grad, eps))
}

/// Monte Carlo estimate of `E‖εᵢ(θ)‖²` from `draws` samples.
pub fn estimate_noise_variance(
    model: &LossModel,
    noise: &NoiseSpec,
    node: usize,
    theta: &ParameterVector,
    draws: usize,
    rng: &mut impl RngCore,
) -> Result<f64> {
    model.check_dim(theta.as_slice())?;
    let mut eps = vec![0.0; model.dim()];
    let mut total = 0.0;
    for _ in 0..draws {
        noise.sample_into(model, node, theta.as_slice(), rng, &mut eps);
        total += linalg::norm_sq(&eps);
    }
    Ok(total / draws.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn pv(v: &[f64]) -> ParameterVector {
        ParameterVector::new(v.to_vec()).unwrap()
    }

    fn identity2() -> LossModel {
        LossModel::quadratic(DenseMatrix::identity(2), vec![0.0, 0.0]).unwrap()
    }

    #[test]
    fn quadratic_loss_values() {
        let m = identity2();
        assert_eq!(m.loss_eval(&pv(&[0.0, 0.0])).unwrap(), 0.0);
        assert!((m.loss_eval(&pv(&[3.0, 4.0])).unwrap() - 12.5).abs() < 1e-12);
        assert_eq!(m.grad_eval(&pv(&[3.0, 4.0])).unwrap().as_slice(), &[3.0, 4.0]);
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let m = identity2();
        assert!(matches!(m.loss_eval(&pv(&[1.0])), Err(Error::Config(_))));
        assert!(matches!(m.grad_eval(&pv(&[1.0, 2.0, 3.0])), Err(Error::Config(_))));
    }

    #[test]
    fn sine_minimum_is_zero() {
        let m = LossModel::nonconvex_sine(&[1.0, 0.5], &[0.3, -1.0], 0.4, 3.0).unwrap();
        let star = pv(&[0.3, -1.0]);
        assert_eq!(m.loss_eval(&star).unwrap(), 0.0);
        assert!(m.grad_eval(&star).unwrap().norm() == 0.0);
        assert!((m.lipschitz_const() - (1.0 + 0.4 * 9.0)).abs() < 1e-9);
    }

    #[test]
    fn quadratic_lipschitz() {
        let m = LossModel::quadratic_diag(&[1.0, 4.0], &[0.0, 0.0]).unwrap();
        assert!((m.lipschitz_const() - 4.0).abs() < 1e-9);
        assert!((identity2().lipschitz_const() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quadratic_rejects_b_outside_range() {
        let q = DenseMatrix::from_diagonal(&[1.0, 0.0]);
        assert!(LossModel::quadratic(q.clone(), vec![1.0, 1.0]).is_err());
        let m = LossModel::quadratic(q, vec![2.0, 0.0]).unwrap();
        assert_eq!(m.known_minimizer().unwrap(), &[2.0, 0.0]);
        assert_eq!(m.loss_eval(&pv(&[2.0, 5.0])).unwrap(), 0.0);
    }

    #[test]
    fn quadratic_rejects_indefinite() {
        let q = DenseMatrix::from_diagonal(&[1.0, -1.0]);
        assert!(LossModel::quadratic(q, vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn fd_quadratic_and_zero_model() {
        let m = identity2();
        let g = finite_diff_grad(&m, &pv(&[1.0, 1.0]), 1e-6).unwrap();
        assert!((g.as_slice()[0] - 1.0).abs() < 1e-8);
        assert!((g.as_slice()[1] - 1.0).abs() < 1e-8);

        let zero = LossModel::quadratic(DenseMatrix::zeros(3), vec![0.0; 3]).unwrap();
        let g = finite_diff_grad(&zero, &pv(&[0.2, -3.0, 7.0]), 1e-6).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
        assert!(finite_diff_grad(&zero, &pv(&[0.0; 3]), 0.0).is_err());
    }

    #[test]
    fn logistic_matches_finite_differences() {
        let m = LossModel::logistic_synthetic(200, 5, 0.01, 11).unwrap();
        let mut r = rng_from_seed(2);
        for _ in 0..20 {
            let theta = pv(&(0..5).map(|_| rng::standard_normal(&mut r)).collect::<Vec<_>>());
            let g = m.grad_eval(&theta).unwrap();
            let fd = finite_diff_grad(&m, &theta, default_fd_step(&theta)).unwrap();
            let diff: f64 = g.as_slice().iter().zip(fd.as_slice()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(diff / (1.0 + g.norm()) < 1e-5, "rel err {}", diff / (1.0 + g.norm()));
        }
    }

    #[test]
    fn zero_noise_is_exact_gradient() {
        let m = identity2();
        let noise = NoiseSpec::gaussian(vec![0.0, 2.0]).unwrap();
        let mut r = rng_from_seed(0);
        let theta = pv(&[1.5, -2.0]);
        let g = noisy_grad(&m, &noise, 0, &theta, &mut r).unwrap();
        assert_eq!(g, m.grad_eval(&theta).unwrap());
        assert!(noisy_grad(&m, &noise, 2, &theta, &mut r).is_err());
    }

    #[test]
    fn gaussian_noise_calibration() {
        let m = LossModel::quadratic_diag(&[1.0; 4], &[0.0; 4]).unwrap();
        let noise = NoiseSpec::gaussian(vec![1.0]).unwrap();
        let theta = pv(&[0.5, 0.5, -0.5, 1.0]);
        let mut r = rng_from_seed(99);
        let draws = 100_000;
        let mut eps = vec![0.0; 4];
        let mut sum = vec![0.0; 4];
        let mut sq = 0.0;
        for _ in 0..draws {
            noise.sample_into(&m, 0, theta.as_slice(), &mut r, &mut eps);
            sq += linalg::norm_sq(&eps);
            sum.iter_mut().zip(&eps).for_each(|(s, e)| *s += e);
        }
        let mean_sq = sq / draws as f64;
        assert!((0.97..=1.03).contains(&mean_sq), "{mean_sq}");
        let tol = 4.0 * 1.0 / (2.0 * (draws as f64).sqrt());
        for s in sum {
            assert!((s / draws as f64).abs() < tol);
        }
    }

    #[test]
    fn minibatch_variance_scales_with_batch() {
        let m = LossModel::quadratic_diag(&[1.0; 3], &[0.0; 3]).unwrap();
        let table = SampleSource::perturbation_table(512, 3, 2.0, 5).unwrap();
        let noise = NoiseSpec::minibatch(vec![1, 64], table).unwrap();
        let theta = pv(&[0.0; 3]);
        let v0 = noise.variance(&m, 0, theta.as_slice());
        let v1 = noise.variance(&m, 1, theta.as_slice());
        assert!((v0 / v1 - 64.0).abs() < 1e-9);
        let mut r = rng_from_seed(4);
        let est = estimate_noise_variance(&m, &noise, 0, &theta, 100_000, &mut r).unwrap();
        assert!((est / v0 - 1.0).abs() < 0.03, "{est} vs {v0}");
    }

    #[test]
    fn minibatch_from_logistic_samples_is_unbiased() {
        let m = LossModel::logistic_synthetic(64, 3, 0.0, 8).unwrap();
        let noise = NoiseSpec::minibatch(vec![4], SampleSource::ModelSamples).unwrap();
        noise.validate_for(&m).unwrap();
        let theta = pv(&[0.3, -0.2, 0.1]);
        let exact = noise.variance(&m, 0, theta.as_slice());
        let mut r = rng_from_seed(6);
        let est = estimate_noise_variance(&m, &noise, 0, &theta, 100_000, &mut r).unwrap();
        assert!((est / exact - 1.0).abs() < 0.03, "{est} vs {exact}");
        assert!(noise.variance_is_measured());
    }

    #[test]
    fn model_samples_need_logistic() {
        let noise = NoiseSpec::minibatch(vec![1], SampleSource::ModelSamples).unwrap();
        assert!(noise.validate_for(&identity2()).is_err());
    }

    #[test]
    fn non_finite_parameters_rejected() {
        assert!(ParameterVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(serde_json::from_str::<ParameterVector>("[1.0, 2.0]").is_ok());
    }
}
