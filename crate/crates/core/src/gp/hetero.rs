//! Two-stage heteroscedastic GP: a homoscedastic fit provides residuals,
//! a second GP models the log noise `z(t) = log r(t)`, and the signal GP is
//! refit with the most-likely noise `r(t_i) = exp(E[z(t_i)])`.

use serde::{Deserialize, Serialize};

use super::model::{GpModel, NoiseModel, PosteriorPrediction, PriorMean, TrainingSet};
use super::optimize::{optimize_with_prior, Hyperparameters, OptConfig};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeteroConfig {
    /// Noise re-estimation rounds after the homoscedastic stage.
    pub iterations: usize,
    pub min_points: usize,
    /// Width of the moving window (in distinct timestamps) that smooths the
    /// squared residuals before the log is taken.
    pub smoothing_window: usize,
    /// Smallest noise variance the model will use.
    pub noise_floor: f64,
    /// Re-optimize the signal kernel once, after the first noise injection.
    pub reoptimize_signal: bool,
    pub opt: OptConfig,
}

impl Default for HeteroConfig {
    fn default() -> Self {
        Self {
            iterations: 3,
            min_points: 10,
            smoothing_window: 5,
            noise_floor: 1e-8,
            reoptimize_signal: true,
            opt: OptConfig::default(),
        }
    }
}

/// Signal GP with input-dependent noise plus the GP over its log noise.
#[derive(Clone, Debug)]
pub struct HeteroGpModel {
    signal: GpModel,
    noise_gp: GpModel,
    noise_floor: f64,
    /// Set when every smoothed residual variance was at or below the floor.
    degenerate_noise: bool,
}

/// Serializable description of a fitted GP; refitting it reproduces the
/// model bit-for-bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpSnapshot {
    pub train: TrainingSet,
    pub kernel: super::KernelParams,
    pub noise: NoiseModel,
    pub prior: PriorMean,
}

impl From<&GpModel> for GpSnapshot {
    fn from(m: &GpModel) -> Self {
        Self { train: m.training_set().clone(), kernel: *m.params(), noise: m.noise().clone(), prior: m.prior() }
    }
}

impl GpSnapshot {
    pub fn restore(self) -> Result<GpModel> {
        GpModel::fit(self.train, self.kernel, self.noise, self.prior)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeteroSnapshot {
    pub signal: GpSnapshot,
    pub noise_gp: GpSnapshot,
    pub noise_floor: f64,
    pub degenerate_noise: bool,
}

impl HeteroGpModel {
    pub fn signal(&self) -> &GpModel {
        &self.signal
    }

    pub fn noise_gp(&self) -> &GpModel {
        &self.noise_gp
    }

    pub fn degenerate_noise(&self) -> bool {
        self.degenerate_noise
    }

    /// Most-likely noise variance `r(t*) = exp(E[z(t*)])`, floored.
    pub fn noise_variance(&self, query: &[f64]) -> Vec<f64> {
        self.noise_gp
            .predict_mean(query)
            .into_iter()
            .map(|z| z.exp().max(self.noise_floor))
            .collect()
    }

    /// Predictive distribution including the input-dependent noise `r(t*)`.
    pub fn predict(&self, query: &[f64]) -> PosteriorPrediction {
        let r = self.noise_variance(query);
        self.signal.predict_with_noise(query, &r).expect("lengths match")
    }

    pub fn snapshot(&self) -> HeteroSnapshot {
        HeteroSnapshot {
            signal: (&self.signal).into(),
            noise_gp: (&self.noise_gp).into(),
            noise_floor: self.noise_floor,
            degenerate_noise: self.degenerate_noise,
        }
    }

    pub fn restore(s: HeteroSnapshot) -> Result<Self> {
        Ok(Self {
            signal: s.signal.restore()?,
            noise_gp: s.noise_gp.restore()?,
            noise_floor: s.noise_floor,
            degenerate_noise: s.degenerate_noise,
        })
    }
}

// Distinct timestamps with the mean squared residual of their observations.
fn grouped_squared_residuals(model: &GpModel) -> (Vec<f64>, Vec<f64>) {
    let train = model.training_set();
    let times = model.distinct_inputs().to_vec();
    let mean = model.predict_mean(&times);
    let mut sum = vec![0.0; times.len()];
    let mut count = vec![0usize; times.len()];
    for (t, y) in train.t().iter().zip(train.y()) {
        let g = times.binary_search_by(|v| v.total_cmp(t)).expect("training time is a distinct input");
        sum[g] += (y - mean[g]).powi(2);
        count[g] += 1;
    }
    let v = sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect();
    (times, v)
}

fn moving_average(v: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..v.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(v.len());
            v[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Fits a heteroscedastic GP by the most-likely-noise procedure.
///
/// The targets are centered on their mean, which becomes the constant prior
/// mean of the signal GP.
pub fn fit_heteroscedastic(train: &TrainingSet, config: &HeteroConfig) -> Result<HeteroGpModel> {
    if train.len() < config.min_points.max(2) {
        return Err(Error::InsufficientData(format!(
            "heteroscedastic fit needs at least {} points, got {}",
            config.min_points,
            train.len()
        )));
    }
    let prior = PriorMean::Constant(train.y_mean());
    let floor = config.noise_floor;

    let stage_one = OptConfig { learn_noise: true, ..config.opt.clone() };
    let initial = NoiseModel::Constant((0.1 * train.y_std()).powi(2).max(floor));
    let Hyperparameters { mut kernel, noise, .. } = optimize_with_prior(train, &initial, prior, &stage_one)?;
    let mut current = GpModel::fit(train.clone(), kernel, noise, prior)?;

    let mut noise_gp = None;
    let mut degenerate = false;
    for round in 0..config.iterations.max(1) {
        let (times, sq) = grouped_squared_residuals(&current);
        let smoothed = moving_average(&sq, config.smoothing_window.max(1));
        degenerate = smoothed.iter().all(|&v| v <= floor);
        let z: Vec<f64> = smoothed.iter().map(|&v| v.max(floor).ln()).collect();

        let z_set = TrainingSet::new(times, z)?;
        let z_prior = PriorMean::Constant(z_set.y_mean());
        let z_model = if z_set.len() >= 2 {
            let cfg = OptConfig { learn_noise: true, seed: config.opt.seed.wrapping_add(1 + round as u64), ..config.opt.clone() };
            let h = optimize_with_prior(&z_set, &NoiseModel::Constant(1e-2), z_prior, &cfg)?;
            GpModel::fit(z_set, h.kernel, h.noise, z_prior)?
        } else {
            GpModel::fit(z_set, kernel, NoiseModel::Constant(1e-2), z_prior)?
        };

        let r: Vec<f64> = z_model.predict_mean(train.t()).into_iter().map(|z| z.exp().max(floor)).collect();
        let per_point = NoiseModel::PerPoint(r);
        if round == 0 && config.reoptimize_signal {
            let cfg = OptConfig { learn_noise: false, seed: config.opt.seed.wrapping_add(1000), ..config.opt.clone() };
            kernel = optimize_with_prior(train, &per_point, prior, &cfg)?.kernel;
        }
        current = GpModel::fit(train.clone(), kernel, per_point, prior)?;
        noise_gp = Some(z_model);
    }

    Ok(HeteroGpModel {
        signal: current,
        noise_gp: noise_gp.expect("at least one round"),
        noise_floor: floor,
        degenerate_noise: degenerate,
    })
}
