//! Uncertainty-modulated admittance control of the virtual error dynamics
//! `m ë + d(t) ė + k(t) e = F_ext`, with `e = desired − actual` per axis.
//!
//! Stiffness follows a sigmoid of the policy standard deviation: stiff where
//! the demonstrations agree, compliant where they disagree. Damping tracks
//! the stiffness through a fixed damping ratio. Rotational axes use the same
//! law with their own parameter set (N·m/rad instead of N/m).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::policy::{TaskPolicy, DIMS};

/// Controller constants of one axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerParams {
    pub mass: f64,
    pub damping_ratio: f64,
    pub k_min: f64,
    pub k_max: f64,
    /// Sigmoid steepness.
    pub alpha: f64,
    /// Uncertainty at the sigmoid midpoint.
    pub beta: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self { mass: 1.0, damping_ratio: 1.0, k_min: 100.0, k_max: 500.0, alpha: 600.0, beta: 0.01 }
    }
}

impl ControllerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return invalid(format!("mass must be positive, got {}", self.mass));
        }
        if !(self.damping_ratio > 0.0 && self.damping_ratio.is_finite()) {
            return invalid(format!("damping ratio must be positive, got {}", self.damping_ratio));
        }
        if !(self.k_min > 0.0 && self.k_min <= self.k_max && self.k_max.is_finite()) {
            return invalid(format!("need 0 < k_min <= k_max, got {} and {}", self.k_min, self.k_max));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return invalid(format!("alpha must be positive, got {}", self.alpha));
        }
        if !self.beta.is_finite() {
            return invalid("beta must be finite");
        }
        Ok(())
    }

    fn range(&self) -> f64 {
        self.k_max - self.k_min
    }

    fn sigmoid(&self, sigma: f64) -> f64 {
        1.0 / (1.0 + (-self.alpha * (sigma - self.beta)).exp())
    }
}

/// `k_max − (k_max − k_min) / (1 + exp(−α(σ − β)))`, clamped to
/// `[k_min, k_max]` against rounding at saturation.
pub fn stiffness_profile(sigma: f64, p: &ControllerParams) -> f64 {
    (p.k_max - p.range() * p.sigmoid(sigma)).clamp(p.k_min, p.k_max)
}

/// Time derivative of [`stiffness_profile`] along `σ(t)`:
/// `k̇ = −(α / Δk)(k_max − k)(k − k_min)·σ̇`.
pub fn stiffness_rate(sigma: f64, sigma_rate: f64, p: &ControllerParams) -> f64 {
    let s = p.sigmoid(sigma);
    -p.alpha * p.range() * s * (1.0 - s) * sigma_rate
}

/// `2δ·sqrt(m·k)`
pub fn damping_from_ratio(k: f64, p: &ControllerParams) -> f64 {
    2.0 * p.damping_ratio * (p.mass * k).sqrt()
}

/// Largest `|k̇|` for a given `|σ̇|`: `(α/4)(k_max − k_min)·σ̇`, reached at
/// the sigmoid midpoint.
pub fn stiffness_rate_bound(p: &ControllerParams, sigma_rate: f64) -> f64 {
    0.25 * p.alpha * p.range() * sigma_rate
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub gamma: f64,
    /// Largest `σ̇` the sufficient condition allows.
    pub sigma_rate_bound: f64,
    pub observed_max_sigma_rate: f64,
    pub satisfied: bool,
}

/// Sufficient stability condition
/// `σ̇ < (16δ/α)·sqrt(k_min³) / ((k_max − k_min)(1 + 4δ²)·sqrt(m))`.
pub fn check_stability(p: &ControllerParams, sigma_rate_max: f64) -> StabilityReport {
    let d = p.damping_ratio;
    let bound = if p.range() == 0.0 {
        f64::INFINITY
    } else {
        (16.0 * d / p.alpha) * p.k_min.powi(3).sqrt() / (p.range() * (1.0 + 4.0 * d * d) * p.mass.sqrt())
    };
    StabilityReport {
        gamma: 2.0 * d * (p.k_min / p.mass).sqrt(),
        sigma_rate_bound: bound,
        observed_max_sigma_rate: sigma_rate_max,
        satisfied: sigma_rate_max < bound,
    }
}

/// Controller parameters for the six axes `(x, y, z, rx, ry, rz)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisParams(pub [ControllerParams; DIMS]);

impl AxisParams {
    pub fn uniform(p: ControllerParams) -> Self {
        Self([p; DIMS])
    }

    pub fn split(translation: ControllerParams, rotation: ControllerParams) -> Self {
        Self([translation, translation, translation, rotation, rotation, rotation])
    }

    pub fn validate(&self) -> Result<()> {
        self.0.iter().try_for_each(ControllerParams::validate)
    }
}

impl Default for AxisParams {
    fn default() -> Self {
        Self::uniform(ControllerParams::default())
    }
}

/// How the six policy variances become per-axis `σ`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaMode {
    /// `σ_i = sqrt(var_i)` for every axis.
    #[default]
    PerAxis,
    /// Every axis uses the largest of the six standard deviations.
    SharedMax,
}

/// Piecewise-linear per-axis uncertainty `σ(t)` on simulation time.
#[derive(Clone, Debug, PartialEq)]
pub struct UncertaintyProfile {
    stamps: Vec<f64>,
    sigma: Vec<[f64; DIMS]>,
}

impl UncertaintyProfile {
    pub fn new(stamps: Vec<f64>, sigma: Vec<[f64; DIMS]>) -> Result<Self> {
        if stamps.is_empty() || stamps.len() != sigma.len() {
            return invalid("uncertainty profile needs matching, nonempty stamps and values");
        }
        if stamps.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid("uncertainty stamps must be strictly increasing");
        }
        if sigma.iter().flatten().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return invalid("uncertainty must be finite and nonnegative");
        }
        Ok(Self { stamps, sigma })
    }

    pub fn constant(sigma: f64) -> Result<Self> {
        Self::new(vec![0.0], vec![[sigma; DIMS]])
    }

    /// Samples `σ(t)` at `samples` evenly spaced times on `[0, horizon]`.
    pub fn from_fn<F: Fn(f64) -> [f64; DIMS]>(horizon: f64, samples: usize, f: F) -> Result<Self> {
        let stamps: Vec<f64> = crate::alignment::unit_grid(samples.max(2)).iter().map(|s| s * horizon).collect();
        let sigma = stamps.iter().map(|&t| f(t)).collect();
        Self::new(stamps, sigma)
    }

    /// Policy standard deviation with task time `[0, 1]` stretched over
    /// `[0, horizon]`.
    pub fn from_policy(policy: &TaskPolicy, horizon: f64, samples: usize, mode: SigmaMode) -> Result<Self> {
        let task = crate::alignment::unit_grid(samples.max(2));
        let pred = policy.query(&task);
        let sigma = pred
            .iter()
            .map(|p| {
                let s = p.std();
                match mode {
                    SigmaMode::PerAxis => s,
                    SigmaMode::SharedMax => [s.iter().copied().fold(0.0, f64::max); DIMS],
                }
            })
            .collect();
        Self::new(task.iter().map(|s| s * horizon).collect(), sigma)
    }

    pub fn stamps(&self) -> &[f64] {
        &self.stamps
    }

    /// Linear interpolation, held constant outside the sampled range.
    pub fn at(&self, t: f64) -> [f64; DIMS] {
        let n = self.stamps.len();
        if t <= self.stamps[0] {
            return self.sigma[0];
        }
        if t >= self.stamps[n - 1] {
            return self.sigma[n - 1];
        }
        let k = self.stamps.partition_point(|&s| s <= t);
        let (t0, t1) = (self.stamps[k - 1], self.stamps[k]);
        let w = (t - t0) / (t1 - t0);
        std::array::from_fn(|d| self.sigma[k - 1][d] + w * (self.sigma[k][d] - self.sigma[k - 1][d]))
    }
}

/// External force acting on the error dynamics.
pub trait ForceField {
    fn force(&self, t: f64, error: &[f64; DIMS], rate: &[f64; DIMS]) -> [f64; DIMS];
}

impl<F> ForceField for F
where
    F: Fn(f64, &[f64; DIMS], &[f64; DIMS]) -> [f64; DIMS],
{
    fn force(&self, t: f64, error: &[f64; DIMS], rate: &[f64; DIMS]) -> [f64; DIMS] {
        self(t, error, rate)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ForceModel {
    Zero,
    Constant([f64; DIMS]),
    /// `F = gain·(e_env(t) − e)`: a spring pulling the error toward the
    /// offset `e_env(t)` an environmental constraint would impose, for
    /// instance the difference between the policy mean and the true door arc.
    SpringToTruth { gain: f64, stamps: Vec<f64>, offset: Vec<[f64; DIMS]> },
}

impl ForceField for ForceModel {
    fn force(&self, t: f64, error: &[f64; DIMS], _rate: &[f64; DIMS]) -> [f64; DIMS] {
        match self {
            ForceModel::Zero => [0.0; DIMS],
            ForceModel::Constant(f) => *f,
            ForceModel::SpringToTruth { gain, stamps, offset } => {
                let target = interpolate(stamps, offset, t);
                std::array::from_fn(|d| gain * (target[d] - error[d]))
            }
        }
    }
}

fn interpolate(stamps: &[f64], values: &[[f64; DIMS]], t: f64) -> [f64; DIMS] {
    let n = stamps.len();
    if n == 0 {
        return [0.0; DIMS];
    }
    if t <= stamps[0] {
        return values[0];
    }
    if t >= stamps[n - 1] {
        return values[n - 1];
    }
    let k = stamps.partition_point(|&s| s <= t);
    let w = (t - stamps[k - 1]) / (stamps[k] - stamps[k - 1]);
    std::array::from_fn(|d| values[k - 1][d] + w * (values[k][d] - values[k - 1][d]))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    /// Symplectic Euler: velocity first, then position with the new velocity.
    #[default]
    SemiImplicitEuler,
    Rk4,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub integrator: Integrator,
    pub sigma_mode: SigmaMode,
    pub initial_error: [f64; DIMS],
    pub initial_rate: [f64; DIMS],
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            horizon: 1.0,
            integrator: Integrator::default(),
            sigma_mode: SigmaMode::default(),
            initial_error: [0.0; DIMS],
            initial_rate: [0.0; DIMS],
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return invalid(format!("time step must be positive, got {}", self.dt));
        }
        if !(self.horizon >= self.dt && self.horizon.is_finite()) {
            return invalid(format!("horizon {} shorter than the time step {}", self.horizon, self.dt));
        }
        if self.initial_error.iter().chain(&self.initial_rate).any(|v| !v.is_finite()) {
            return invalid("initial state must be finite");
        }
        Ok(())
    }
}

/// Sampled simulation state, one entry per time step.
#[derive(Clone, Debug, PartialEq)]
pub struct SimTrace {
    pub t: Vec<f64>,
    pub error: Vec<[f64; DIMS]>,
    pub rate: Vec<[f64; DIMS]>,
    pub sigma: Vec<[f64; DIMS]>,
    pub sigma_rate: Vec<[f64; DIMS]>,
    pub stiffness: Vec<[f64; DIMS]>,
    pub damping: Vec<[f64; DIMS]>,
    pub force: Vec<[f64; DIMS]>,
    /// `Σ_axes ½ m ė² + ½ k e²`.
    pub energy: Vec<f64>,
    pub stability: [StabilityReport; DIMS],
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn stable(&self) -> bool {
        self.stability.iter().all(|s| s.satisfied)
    }

    pub fn error_norm(&self) -> Vec<f64> {
        self.error.iter().map(|e| e.iter().map(|v| v * v).sum::<f64>().sqrt()).collect()
    }
}

/// Integrates the per-axis error dynamics with fixed step `config.dt`.
pub fn simulate(
    profile: &UncertaintyProfile,
    env: &dyn ForceField,
    params: &AxisParams,
    config: &SimConfig,
) -> Result<SimTrace> {
    params.validate()?;
    config.validate()?;
    let steps = (config.horizon / config.dt).round() as usize;
    let dt = config.dt;
    let t: Vec<f64> = (0..=steps).map(|i| i as f64 * dt).collect();
    let sigma: Vec<[f64; DIMS]> = t.iter().map(|&ti| profile.at(ti)).collect();
    let sigma_rate = central_differences(&sigma, dt);
    let gains = |s: &[f64; DIMS]| -> ([f64; DIMS], [f64; DIMS]) {
        let k: [f64; DIMS] = std::array::from_fn(|d| stiffness_profile(s[d], &params.0[d]));
        let c = std::array::from_fn(|d| damping_from_ratio(k[d], &params.0[d]));
        (k, c)
    };

    let mut e = config.initial_error;
    let mut v = config.initial_rate;
    let mut trace = SimTrace {
        t: Vec::with_capacity(t.len()),
        error: Vec::with_capacity(t.len()),
        rate: Vec::with_capacity(t.len()),
        sigma: Vec::with_capacity(t.len()),
        sigma_rate: Vec::with_capacity(t.len()),
        stiffness: Vec::with_capacity(t.len()),
        damping: Vec::with_capacity(t.len()),
        force: Vec::with_capacity(t.len()),
        energy: Vec::with_capacity(t.len()),
        stability: [check_stability(&params.0[0], 0.0); DIMS],
    };

    for i in 0..t.len() {
        let (k, c) = gains(&sigma[i]);
        let f = env.force(t[i], &e, &v);
        trace.t.push(t[i]);
        trace.error.push(e);
        trace.rate.push(v);
        trace.sigma.push(sigma[i]);
        trace.sigma_rate.push(sigma_rate[i]);
        trace.stiffness.push(k);
        trace.damping.push(c);
        trace.force.push(f);
        trace.energy.push((0..DIMS).map(|d| 0.5 * params.0[d].mass * v[d] * v[d] + 0.5 * k[d] * e[d] * e[d]).sum());
        if i == steps {
            break;
        }
        match config.integrator {
            Integrator::SemiImplicitEuler => {
                for d in 0..DIMS {
                    let acc = (f[d] - c[d] * v[d] - k[d] * e[d]) / params.0[d].mass;
                    v[d] += dt * acc;
                    e[d] += dt * v[d];
                }
            }
            Integrator::Rk4 => {
                let deriv = |tt: f64, e: &[f64; DIMS], v: &[f64; DIMS]| -> ([f64; DIMS], [f64; DIMS]) {
                    let (k, c) = gains(&profile.at(tt));
                    let f = env.force(tt, e, v);
                    (*v, std::array::from_fn(|d| (f[d] - c[d] * v[d] - k[d] * e[d]) / params.0[d].mass))
                };
                let add = |a: &[f64; DIMS], b: &[f64; DIMS], h: f64| -> [f64; DIMS] { std::array::from_fn(|d| a[d] + h * b[d]) };
                let (k1e, k1v) = deriv(t[i], &e, &v);
                let (k2e, k2v) = deriv(t[i] + 0.5 * dt, &add(&e, &k1e, 0.5 * dt), &add(&v, &k1v, 0.5 * dt));
                let (k3e, k3v) = deriv(t[i] + 0.5 * dt, &add(&e, &k2e, 0.5 * dt), &add(&v, &k2v, 0.5 * dt));
                let (k4e, k4v) = deriv(t[i] + dt, &add(&e, &k3e, dt), &add(&v, &k3v, dt));
                for d in 0..DIMS {
                    e[d] += dt / 6.0 * (k1e[d] + 2.0 * k2e[d] + 2.0 * k3e[d] + k4e[d]);
                    v[d] += dt / 6.0 * (k1v[d] + 2.0 * k2v[d] + 2.0 * k3v[d] + k4v[d]);
                }
            }
        }
        if e.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::Divergence { step: i + 1 });
        }
    }

    trace.stability = std::array::from_fn(|d| {
        let max_rate = trace.sigma_rate.iter().map(|r| r[d].max(0.0)).fold(0.0, f64::max);
        check_stability(&params.0[d], max_rate)
    });
    Ok(trace)
}

fn central_differences(x: &[[f64; DIMS]], dt: f64) -> Vec<[f64; DIMS]> {
    let n = x.len();
    (0..n)
        .map(|i| {
            if n < 2 {
                return [0.0; DIMS];
            }
            let (lo, hi) = (i.saturating_sub(1), (i + 1).min(n - 1));
            let h = (hi - lo) as f64 * dt;
            std::array::from_fn(|d| (x[hi][d] - x[lo][d]) / h)
        })
        .collect()
}
