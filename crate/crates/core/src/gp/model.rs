//! Single-output GP regression with constant or per-point noise.
//!
//! Observations that share an identical timestamp are collapsed into one
//! precision-weighted pseudo-observation before the Gram matrix is built.
//! For Gaussian noise this is exact: the posterior over `f` is unchanged and
//! the marginal likelihood differs by a closed-form correction term, which is
//! added back. Pooled demonstrations on a common grid therefore cost
//! O(G³) in the number of distinct timestamps instead of O(N³).

use std::f64::consts::PI;

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::kernel::{gram, rbf_kernel, KernelParams};
use crate::error::{invalid, Error, Result};

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;
const NEGATIVE_VARIANCE_WARNING: f64 = -1e-8;

/// Scalar training data `{(t_i, y_i)}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    t: Vec<f64>,
    y: Vec<f64>,
}

impl TrainingSet {
    pub fn new(t: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if t.len() != y.len() {
            return invalid(format!("{} timestamps but {} observations", t.len(), y.len()));
        }
        if t.is_empty() {
            return invalid("training set is empty");
        }
        if t.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return invalid("training set contains non-finite values");
        }
        Ok(Self { t, y })
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub(crate) fn range(&self) -> f64 {
        let lo = self.t.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    }

    pub(crate) fn y_mean(&self) -> f64 {
        self.y.iter().sum::<f64>() / self.y.len() as f64
    }

    pub(crate) fn y_std(&self) -> f64 {
        let m = self.y_mean();
        (self.y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.y.len() as f64).sqrt()
    }
}

/// Observation noise variance: shared `σ_n²` or one `r(t_i)` per point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum NoiseModel {
    Constant(f64),
    PerPoint(Vec<f64>),
}

impl NoiseModel {
    fn variance_at(&self, i: usize) -> f64 {
        match self {
            NoiseModel::Constant(v) => *v,
            NoiseModel::PerPoint(r) => r[i],
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        let ok = |v: &f64| v.is_finite() && *v >= 0.0;
        match self {
            NoiseModel::Constant(v) if !ok(v) => invalid(format!("noise variance {v} is invalid")),
            NoiseModel::PerPoint(r) if r.len() != n => {
                invalid(format!("{} noise variances for {} observations", r.len(), n))
            }
            NoiseModel::PerPoint(r) if !r.iter().all(ok) => {
                invalid("per-point noise variances must be finite and nonnegative")
            }
            _ => Ok(()),
        }
    }
}

/// Prior mean function. `Constant` is used to center the data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PriorMean {
    Zero,
    Constant(f64),
}

impl PriorMean {
    pub fn value(&self) -> f64 {
        match self {
            PriorMean::Zero => 0.0,
            PriorMean::Constant(c) => *c,
        }
    }
}

/// Posterior mean and marginal variances at a set of query points.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorPrediction {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub cov: Option<DMatrix<f64>>,
}

impl PosteriorPrediction {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if mean.len() != var.len() {
            return invalid("mean and variance lengths differ");
        }
        Ok(Self { mean, var, cov: None })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// Group of observations sharing one timestamp, reduced to sufficient
/// statistics.
#[derive(Clone, Debug)]
struct Collapsed {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    noise: Vec<f64>,
    counts: Vec<usize>,
    /// `Σ_g Σ_k (y_gk − ȳ_g)² / r_gk`
    weighted_scatter: f64,
    /// log-likelihood correction for collapsing the replicates
    correction: f64,
}

fn collapse(train: &TrainingSet, noise: &NoiseModel, prior: f64) -> Result<Collapsed> {
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.sort_by(|&a, &b| train.t[a].total_cmp(&train.t[b]));

    let mut out = Collapsed {
        inputs: Vec::new(),
        targets: Vec::new(),
        noise: Vec::new(),
        counts: Vec::new(),
        weighted_scatter: 0.0,
        correction: 0.0,
    };
    let mut start = 0;
    while start < order.len() {
        let t0 = train.t[order[start]];
        let mut end = start + 1;
        while end < order.len() && train.t[order[end]] == t0 {
            end += 1;
        }
        let group = &order[start..end];
        if group.len() == 1 {
            let i = group[0];
            out.inputs.push(t0);
            out.targets.push(train.y[i] - prior);
            out.noise.push(noise.variance_at(i));
        } else {
            if group.iter().any(|&i| noise.variance_at(i) == 0.0) {
                return Err(Error::Conditioning(format!(
                    "{} observations at t = {t0} with zero noise make the Gram matrix singular",
                    group.len()
                )));
            }
            let precision: f64 = group.iter().map(|&i| 1.0 / noise.variance_at(i)).sum();
            let mean = group.iter().map(|&i| train.y[i] / noise.variance_at(i)).sum::<f64>() / precision;
            let mut scatter = 0.0;
            let mut log_det = 0.0;
            for &i in group {
                let r = noise.variance_at(i);
                scatter += (train.y[i] - mean).powi(2) / r;
                log_det += (2.0 * PI * r).ln();
            }
            out.weighted_scatter += scatter;
            out.correction += -0.5 * scatter - 0.5 * log_det + 0.5 * (2.0 * PI / precision).ln();
            out.inputs.push(t0);
            out.targets.push(mean - prior);
            out.noise.push(1.0 / precision);
        }
        out.counts.push(group.len());
        start = end;
    }
    Ok(out)
}

/// A fitted GP: training data, hyperparameters and the cached Cholesky
/// factor of `K(t, t) + R(t) + jitter·I`.
#[derive(Clone, Debug)]
pub struct GpModel {
    train: TrainingSet,
    params: KernelParams,
    noise: NoiseModel,
    prior: PriorMean,
    data: Collapsed,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
}

impl GpModel {
    /// Fits the model, escalating diagonal jitter ×10 from `1e-10` to `1e-4`
    /// times the mean kernel diagonal if the factorization fails.
    pub fn fit(train: TrainingSet, params: KernelParams, noise: NoiseModel, prior: PriorMean) -> Result<Self> {
        noise.validate(train.len())?;
        let data = collapse(&train, &noise, prior.value())?;
        let k = gram(&data.inputs, &data.inputs, &params);
        let scale = params.signal_variance();

        let mut rel = JITTER_START;
        let (chol, jitter) = loop {
            let jitter = rel * scale;
            let mut ky = k.clone();
            for (i, r) in data.noise.iter().enumerate() {
                ky[(i, i)] += r + jitter / data.counts[i] as f64;
            }
            if let Some(c) = ky.cholesky() {
                break (c, jitter);
            }
            rel *= 10.0;
            if rel > JITTER_MAX * 1.000001 {
                return Err(Error::Conditioning(format!(
                    "Gram matrix of {} points not positive definite with jitter up to {:e}",
                    data.inputs.len(),
                    JITTER_MAX * scale
                )));
            }
        };
        let alpha = chol.solve(&DVector::from_column_slice(&data.targets));
        Ok(Self { train, params, noise, prior, data, chol, alpha, jitter })
    }

    pub fn training_set(&self) -> &TrainingSet {
        &self.train
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn prior(&self) -> PriorMean {
        self.prior
    }

    /// Diagonal jitter added to every observation; a group of `c` replicates
    /// carries `jitter / c`, as it would before collapsing.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Distinct training timestamps, ascending.
    pub fn distinct_inputs(&self) -> &[f64] {
        &self.data.inputs
    }

    /// Reconstructs `K_y` from the cached factor.
    pub fn factored_gram(&self) -> DMatrix<f64> {
        let l = self.chol.l();
        &l * l.transpose()
    }

    /// `K_y` assembled directly from the (collapsed) inputs.
    pub fn gram_with_noise(&self) -> DMatrix<f64> {
        let mut ky = gram(&self.data.inputs, &self.data.inputs, &self.params);
        for (i, r) in self.data.noise.iter().enumerate() {
            ky[(i, i)] += r + self.jitter / self.data.counts[i] as f64;
        }
        ky
    }

    /// Latent posterior `p(f* | D)` at `query` (no observation noise added).
    pub fn predict(&self, query: &[f64]) -> PosteriorPrediction {
        self.predict_impl(query, false)
    }

    /// Latent posterior with the full covariance matrix.
    pub fn predict_full(&self, query: &[f64]) -> PosteriorPrediction {
        self.predict_impl(query, true)
    }

    /// Predictive distribution with `R(t*)` added to the variances.
    pub fn predict_with_noise(&self, query: &[f64], noise_at_query: &[f64]) -> Result<PosteriorPrediction> {
        if query.len() != noise_at_query.len() {
            return invalid("query and query-noise lengths differ");
        }
        let mut p = self.predict(query);
        for (v, r) in p.var.iter_mut().zip(noise_at_query) {
            *v += r;
        }
        Ok(p)
    }

    fn predict_impl(&self, query: &[f64], full: bool) -> PosteriorPrediction {
        let ks = gram(&self.data.inputs, query, &self.params);
        let c = self.prior.value();
        let mean: Vec<f64> = (0..query.len()).map(|j| c + ks.column(j).dot(&self.alpha)).collect();
        let v = self.chol.l().solve_lower_triangular(&ks).expect("cholesky factor is invertible");
        let prior_var = self.params.signal_variance();
        let mut var = Vec::with_capacity(query.len());
        for j in 0..query.len() {
            let mut s = prior_var - v.column(j).norm_squared();
            if s < NEGATIVE_VARIANCE_WARNING {
                warn!("posterior variance {s:e} at t = {} clamped to zero", query[j]);
            }
            if s < 0.0 {
                s = 0.0;
            }
            var.push(s);
        }
        let cov = full.then(|| {
            let kss = gram(query, query, &self.params);
            kss - v.transpose() * &v
        });
        PosteriorPrediction { mean, var, cov }
    }

    /// Posterior mean only.
    pub fn predict_mean(&self, query: &[f64]) -> Vec<f64> {
        let c = self.prior.value();
        query
            .iter()
            .map(|&q| {
                c + self
                    .data
                    .inputs
                    .iter()
                    .zip(self.alpha.iter())
                    .map(|(&t, a)| rbf_kernel(q, t, &self.params) * a)
                    .sum::<f64>()
            })
            .collect()
    }

    /// `log p(y | t, θ)`, with `y` replaced by `y − m(t)`.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let targets = DVector::from_column_slice(&self.data.targets);
        let fit = -0.5 * targets.dot(&self.alpha);
        let log_det: f64 = self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
        let g = self.data.inputs.len() as f64;
        fit - log_det - 0.5 * g * (2.0 * PI).ln() + self.data.correction
    }

    /// Gradient of the log marginal likelihood with respect to
    /// `(log l, log σ_f)` and, for constant noise, `log σ_n`.
    pub fn log_marginal_likelihood_gradient(&self) -> Vec<f64> {
        let n = self.data.inputs.len();
        let kinv = self.chol.inverse();
        let w = &self.alpha * self.alpha.transpose() - &kinv;
        let l2 = self.params.length_scale().powi(2);
        let mut d_len = 0.0;
        let mut d_sig = 0.0;
        for i in 0..n {
            for j in 0..n {
                let k = rbf_kernel(self.data.inputs[i], self.data.inputs[j], &self.params);
                let d = self.data.inputs[i] - self.data.inputs[j];
                d_len += w[(i, j)] * k * d * d / l2;
                d_sig += w[(i, j)] * 2.0 * k;
            }
        }
        let mut grad = vec![0.5 * d_len, 0.5 * d_sig];
        if let NoiseModel::Constant(_) = self.noise {
            let mut d_noise: f64 = (0..n).map(|g| self.data.noise[g] * w[(g, g)]).sum();
            d_noise += self.data.weighted_scatter - self.train.len() as f64 + n as f64;
            grad.push(d_noise);
        }
        grad
    }
}
