//! Task policies: six independent heteroscedastic GPs mapping normalized
//! task time to `(x, y, z, θu_x, θu_y, θu_z)`, plus via-point adaptation.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{align_demonstrations, resample, unit_grid, AlignConfig, Trajectory};
use crate::error::{invalid, Error, Result};
use crate::gp::{
    fit_heteroscedastic, product_1d, GpModel, HeteroConfig, HeteroGpModel, HeteroSnapshot, NoiseModel,
    PosteriorPrediction, PriorMean, TrainingSet,
};
use crate::se3::{DistanceWeights, Pose};

pub const DIMS: usize = 6;
pub const DIM_NAMES: [&str; DIMS] = ["x", "y", "z", "rx", "ry", "rz"];

/// Via-points at least this strong are treated as hard constraints when
/// checking consistency.
pub const HARD_STRENGTH: f64 = 1e-10;

#[derive(Clone, Debug, Default)]
pub struct LearnConfig {
    pub grid_size: usize,
    pub weights: DistanceWeights,
    pub align: AlignConfig,
    pub hetero: HeteroConfig,
}

impl LearnConfig {
    pub fn new(grid_size: usize, weights: DistanceWeights, align: AlignConfig, hetero: HeteroConfig) -> Self {
        Self { grid_size, weights, align, hetero }
    }
}

/// Learned policy `π(t) ~ GP(μ*, Σ*)` on the task-time domain `[0, 1]`.
#[derive(Clone, Debug)]
pub struct TaskPolicy {
    dims: Vec<HeteroGpModel>,
    grid: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySnapshot {
    pub grid: Vec<f64>,
    pub dims: Vec<HeteroSnapshot>,
}

/// Marginal predictive distribution of the pose at one task time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseDistribution {
    pub t: f64,
    pub mean: [f64; DIMS],
    pub var: [f64; DIMS],
    /// Set when `t` lies outside `[0, 1]`.
    pub extrapolated: bool,
}

impl PoseDistribution {
    pub fn pose(&self) -> Pose {
        Pose::from_array(self.mean).expect("finite mean")
    }

    pub fn std(&self) -> [f64; DIMS] {
        self.var.map(f64::sqrt)
    }
}

/// Aligns the demonstrations, resamples them on a common grid and fits one
/// heteroscedastic GP per pose dimension on the pooled samples.
pub fn learn_policy(demos: &[Trajectory], config: &LearnConfig) -> Result<TaskPolicy> {
    if demos.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "policy learning needs at least 2 demonstrations, got {}",
            demos.len()
        )));
    }
    let aligned = align_demonstrations(demos, &config.weights, &config.align)?;
    learn_policy_from_aligned(&aligned.trajectories, config)
}

/// Same as [`learn_policy`] for demonstrations already on the `[0, 1]`
/// reference clock.
pub fn learn_policy_from_aligned(aligned: &[Trajectory], config: &LearnConfig) -> Result<TaskPolicy> {
    if aligned.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "policy learning needs at least 2 usable demonstrations, got {}",
            aligned.len()
        )));
    }
    if config.grid_size < 2 {
        return invalid("grid size must be at least 2");
    }
    let grid = unit_grid(config.grid_size);
    let sampled = aligned.iter().map(|d| resample(d, &grid)).collect::<Result<Vec<_>>>()?;
    warn_on_rotation_boundary(&sampled);

    let t: Vec<f64> = sampled.iter().flat_map(|_| grid.iter().copied()).collect();
    let dims = (0..DIMS)
        .into_par_iter()
        .map(|d| {
            let y: Vec<f64> = sampled.iter().flat_map(|s| s.component(d)).collect();
            let mut cfg = config.hetero.clone();
            cfg.opt.seed = cfg.opt.seed.wrapping_add(d as u64);
            fit_heteroscedastic(&TrainingSet::new(t.clone(), y)?, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TaskPolicy { dims, grid })
}

// Componentwise statistics in θu coordinates are meaningless when samples of
// one time step straddle the θ = π boundary.
fn warn_on_rotation_boundary(sampled: &[Trajectory]) {
    let first = &sampled[0];
    for (k, p0) in first.poses().iter().enumerate() {
        for s in &sampled[1..] {
            let p = &s.poses()[k];
            let coord = (p.rotation.vector() - p0.rotation.vector()).norm();
            if coord > crate::se3::arc_distance(&p.rotation, &p0.rotation) + 1.0 {
                warn!("demonstrations cross the rotation-vector boundary near t = {}", first.stamps()[k]);
                return;
            }
        }
    }
}

impl TaskPolicy {
    pub fn dims(&self) -> &[HeteroGpModel] {
        &self.dims
    }

    /// Training grid shared by all six models.
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Per-dimension centering offsets (constant prior means).
    pub fn offsets(&self) -> [f64; DIMS] {
        std::array::from_fn(|d| self.dims[d].signal().prior().value())
    }

    pub fn query(&self, t: &[f64]) -> Vec<PoseDistribution> {
        let preds: Vec<PosteriorPrediction> = self.dims.iter().map(|m| m.predict(t)).collect();
        assemble(t, &preds)
    }

    /// Per-dimension noise variance `r(t)`.
    pub fn noise_variance(&self, t: &[f64]) -> Vec<[f64; DIMS]> {
        let r: Vec<Vec<f64>> = self.dims.iter().map(|m| m.noise_variance(t)).collect();
        (0..t.len()).map(|i| std::array::from_fn(|d| r[d][i])).collect()
    }

    pub fn snapshot(&self) -> PolicySnapshot {
        PolicySnapshot { grid: self.grid.clone(), dims: self.dims.iter().map(HeteroGpModel::snapshot).collect() }
    }

    pub fn restore(s: PolicySnapshot) -> Result<Self> {
        if s.dims.len() != DIMS {
            return Err(Error::Format(format!("policy has {} dimensions, expected {DIMS}", s.dims.len())));
        }
        let dims = s.dims.into_iter().map(HeteroGpModel::restore).collect::<Result<Vec<_>>>()?;
        Ok(Self { dims, grid: s.grid })
    }
}

fn assemble(t: &[f64], preds: &[PosteriorPrediction]) -> Vec<PoseDistribution> {
    t.iter()
        .enumerate()
        .map(|(i, &ti)| {
            let raw: [f64; DIMS] = std::array::from_fn(|d| preds[d].mean[i]);
            let mean = match Pose::from_array(raw) {
                Ok(p) => p.to_array(),
                Err(_) => raw,
            };
            PoseDistribution {
                t: ti,
                mean,
                var: std::array::from_fn(|d| preds[d].var[i]),
                extrapolated: !(0.0..=1.0).contains(&ti),
            }
        })
        .collect()
}

/// Desired pose at task time `t`, observed with per-dimension variance
/// `strength`. Small strengths pull the policy hard; large ones barely.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ViaPoint {
    pub t: f64,
    pub pose: Pose,
    pub strength: [f64; DIMS],
}

impl ViaPoint {
    pub fn new(t: f64, pose: Pose, strength: [f64; DIMS]) -> Result<Self> {
        if !(0.0..=1.0).contains(&t) {
            return invalid(format!("via-point time {t} outside [0, 1]"));
        }
        if strength.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return invalid("via-point strengths must be positive and finite");
        }
        Ok(Self { t, pose, strength })
    }

    pub fn with_strengths(t: f64, pose: Pose, position: f64, rotation: f64) -> Result<Self> {
        Self::new(t, pose, [position, position, position, rotation, rotation, rotation])
    }
}

/// Via-point adaptation at a fixed query grid. The demonstration posterior is
/// computed on construction and reused by every [`ViaPointAdapter::adapt`].
#[derive(Clone, Debug)]
pub struct ViaPointAdapter<'a> {
    policy: &'a TaskPolicy,
    query: Vec<f64>,
    demo: Vec<PosteriorPrediction>,
}

impl<'a> ViaPointAdapter<'a> {
    pub fn new(policy: &'a TaskPolicy, query: &[f64]) -> Self {
        let demo = policy.dims.iter().map(|m| m.predict(query)).collect();
        Self { policy, query: query.to_vec(), demo }
    }

    pub fn query(&self) -> &[f64] {
        &self.query
    }

    /// Cached demonstration-side predictions, one per dimension.
    pub fn demonstration_posterior(&self) -> &[PosteriorPrediction] {
        &self.demo
    }

    /// Fuses the demonstration posterior with the evidence of `via`.
    ///
    /// Per dimension a GP with the policy's kernel is conditioned on the
    /// deviations of the via-points from the policy mean (noise = strength).
    /// Its zero-mean prior is divided out of the prediction so that only the
    /// via-point evidence enters the product; otherwise the prior would be
    /// counted twice and even uninformative via-points would shrink the
    /// policy. Away from the via-points the evidence fades back onto the
    /// policy mean rather than onto the constant offset.
    pub fn adapt(&self, via: &[ViaPoint]) -> Result<Vec<PoseDistribution>> {
        if via.is_empty() {
            return invalid("no via-points given");
        }
        check_hard_consistency(via)?;
        let t: Vec<f64> = via.iter().map(|v| v.t).collect();
        let fused = (0..DIMS)
            .map(|d| {
                let message = self.via_message(d, &t, via)?;
                let demo = &self.demo[d];
                let mut mean = Vec::with_capacity(self.query.len());
                let mut var = Vec::with_capacity(self.query.len());
                for i in 0..self.query.len() {
                    let (m, v) = product_1d(demo.mean[i], demo.var[i], message.mean[i], message.var[i])?;
                    mean.push(m);
                    var.push(v);
                }
                Ok(PosteriorPrediction { mean, var, cov: None })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(assemble(&self.query, &fused))
    }

    fn via_message(&self, d: usize, t: &[f64], via: &[ViaPoint]) -> Result<PosteriorPrediction> {
        let signal = self.policy.dims[d].signal();
        let anchor = signal.predict(t).mean;
        let y: Vec<f64> = via.iter().zip(&anchor).map(|(v, a)| v.pose.to_array()[d] - a).collect();
        let noise = NoiseModel::PerPoint(via.iter().map(|v| v.strength[d]).collect());
        let gp = GpModel::fit(TrainingSet::new(t.to_vec(), y)?, *signal.params(), noise, PriorMean::Zero)?;
        let post = gp.predict(&self.query);
        let prior_var = signal.params().signal_variance();
        let base = &self.demo[d].mean;
        let (mut mean, mut var) = (Vec::with_capacity(post.len()), Vec::with_capacity(post.len()));
        for ((m, v), b) in post.mean.iter().zip(&post.var).zip(base) {
            let precision = if *v > 0.0 { 1.0 / v - 1.0 / prior_var } else { f64::INFINITY };
            if precision.is_infinite() {
                mean.push(b + m);
                var.push(0.0);
            } else if precision <= 0.0 {
                mean.push(*b);
                var.push(f64::INFINITY);
            } else {
                mean.push(b + m / v / precision);
                var.push(1.0 / precision);
            }
        }
        Ok(PosteriorPrediction { mean, var, cov: None })
    }
}

fn check_hard_consistency(via: &[ViaPoint]) -> Result<()> {
    for (i, a) in via.iter().enumerate() {
        for b in &via[i + 1..] {
            if (a.t - b.t).abs() > 1e-12 {
                continue;
            }
            let (pa, pb) = (a.pose.to_array(), b.pose.to_array());
            for d in 0..DIMS {
                if a.strength[d] <= HARD_STRENGTH && b.strength[d] <= HARD_STRENGTH && (pa[d] - pb[d]).abs() > 1e-9 {
                    return Err(Error::InconsistentConstraint(format!(
                        "hard via-points at t = {} disagree in {} ({} vs {})",
                        a.t, DIM_NAMES[d], pa[d], pb[d]
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Convenience wrapper building a one-off [`ViaPointAdapter`].
pub fn adapt_with_viapoints(policy: &TaskPolicy, via: &[ViaPoint], t: &[f64]) -> Result<Vec<PoseDistribution>> {
    ViaPointAdapter::new(policy, t).adapt(via)
}

/// Per-dimension time average of `(E[f*] − f)² + var[f*]`.
pub fn prediction_error(pred: &[PoseDistribution], truth: &Trajectory) -> Result<[f64; DIMS]> {
    if pred.len() != truth.len() {
        return invalid(format!("{} predictions for {} ground-truth samples", pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return invalid("no predictions to evaluate");
    }
    let mut acc = [0.0; DIMS];
    for (p, (t, pose)) in pred.iter().zip(truth.stamps().iter().zip(truth.poses())) {
        if (p.t - t).abs() > 1e-9 {
            return invalid(format!("prediction time {} does not match ground-truth time {t}", p.t));
        }
        let f = pose.to_array();
        for d in 0..DIMS {
            acc[d] += (p.mean[d] - f[d]).powi(2) + p.var[d];
        }
    }
    Ok(acc.map(|a| a / pred.len() as f64))
}

/// Outcome of the streaming via-point experiment.
#[derive(Clone, Debug)]
pub struct StreamingReport {
    pub stamps: Vec<f64>,
    pub static_prediction: Vec<PoseDistribution>,
    pub adaptive_prediction: Vec<PoseDistribution>,
    pub static_mse: [f64; DIMS],
    pub adaptive_mse: [f64; DIMS],
}

impl StreamingReport {
    pub fn mean_static_mse(&self) -> f64 {
        self.static_mse.iter().sum::<f64>() / DIMS as f64
    }

    pub fn mean_adaptive_mse(&self) -> f64 {
        self.adaptive_mse.iter().sum::<f64>() / DIMS as f64
    }
}

/// Streams the ground truth through the policy: the observations up to
/// `t_{i−1}` become via-points and the prediction at `t_i` is scored.
/// The first sample has no history and is left out of both scores.
pub fn streaming_evaluation(policy: &TaskPolicy, truth: &Trajectory, strength: [f64; DIMS]) -> Result<StreamingReport> {
    if truth.len() < 2 {
        return Err(Error::InsufficientData("streaming evaluation needs at least 2 samples".into()));
    }
    let stamps = truth.stamps().to_vec();
    let adapter = ViaPointAdapter::new(policy, &stamps);
    let static_all = policy.query(&stamps);
    let mut via = Vec::with_capacity(stamps.len());
    let mut adaptive = Vec::with_capacity(stamps.len() - 1);
    for i in 1..stamps.len() {
        via.push(ViaPoint::new(stamps[i - 1], truth.poses()[i - 1], strength)?);
        adaptive.push(adapter.adapt(&via)?[i]);
    }
    let scored = Trajectory::new(stamps[1..].to_vec(), truth.poses()[1..].to_vec())?;
    let static_prediction = static_all[1..].to_vec();
    Ok(StreamingReport {
        static_mse: prediction_error(&static_prediction, &scored)?,
        adaptive_mse: prediction_error(&adaptive, &scored)?,
        stamps: stamps[1..].to_vec(),
        static_prediction,
        adaptive_prediction: adaptive,
    })
}
