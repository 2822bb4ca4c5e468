//! Multi-start marginal-likelihood maximization in log-parameter space.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernel::KernelParams;
use super::model::{GpModel, NoiseModel, PriorMean, TrainingSet};
use crate::error::{invalid, Error, Result};

/// Settings for [`optimize_hyperparameters`]. Signal and noise bounds are
/// relative to the standard deviation of the targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptConfig {
    pub starts: usize,
    pub max_iter: usize,
    pub gradient_tolerance: f64,
    /// Absolute length-scale box; `None` uses `[1e-3, 10·range(t)]`.
    pub length_scale_bounds: Option<(f64, f64)>,
    pub signal_std_bounds: (f64, f64),
    pub noise_std_bounds: (f64, f64),
    /// Treat a constant noise level as a third free parameter.
    pub learn_noise: bool,
    pub seed: u64,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            starts: 8,
            max_iter: 100,
            gradient_tolerance: 1e-6,
            length_scale_bounds: None,
            signal_std_bounds: (1e-3, 10.0),
            noise_std_bounds: (1e-4, 10.0),
            learn_noise: false,
            seed: 0,
        }
    }
}

/// Result of hyperparameter optimization.
#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparameters {
    pub kernel: KernelParams,
    pub noise: NoiseModel,
    pub log_likelihood: f64,
}

/// Box bounds on `(log l, log σ_f[, log σ_n])`.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl OptConfig {
    pub fn search_box(&self, train: &TrainingSet) -> SearchBox {
        let range = train.range();
        let (l_lo, l_hi) = self
            .length_scale_bounds
            .unwrap_or((1e-3, 10.0 * if range > 0.0 { range } else { 1.0 }));
        let std = train.y_std();
        let scale = if std > 1e-12 { std } else { 1.0 };
        let mut lower = vec![l_lo.ln(), (self.signal_std_bounds.0 * scale).ln()];
        let mut upper = vec![l_hi.ln(), (self.signal_std_bounds.1 * scale).ln()];
        if self.learn_noise {
            lower.push((self.noise_std_bounds.0 * scale).ln());
            upper.push((self.noise_std_bounds.1 * scale).ln());
        }
        SearchBox { lower, upper }
    }
}

/// Maximizes the log marginal likelihood over the kernel hyperparameters
/// (and the constant noise level if `config.learn_noise`). The prior mean is
/// the centering constant of the targets.
///
/// Each start runs a projected quasi-Newton search that only accepts
/// improving steps, so the returned likelihood is at least that of every
/// start point.
pub fn optimize_hyperparameters(train: &TrainingSet, noise: &NoiseModel, config: &OptConfig) -> Result<Hyperparameters> {
    optimize_with_prior(train, noise, PriorMean::Constant(train.y_mean()), config)
}

pub fn optimize_with_prior(
    train: &TrainingSet,
    noise: &NoiseModel,
    prior: PriorMean,
    config: &OptConfig,
) -> Result<Hyperparameters> {
    if train.len() < 2 {
        return Err(Error::InsufficientData("hyperparameter optimization needs at least 2 points".into()));
    }
    if config.learn_noise && !matches!(noise, NoiseModel::Constant(_)) {
        return invalid("noise learning requires a constant noise model");
    }
    if config.starts == 0 {
        return invalid("at least one optimization start is required");
    }
    let bounds = config.search_box(train);
    if bounds.lower.iter().zip(&bounds.upper).any(|(l, u)| !(l <= u)) {
        return invalid("empty hyperparameter search box");
    }

    let build = |x: &[f64]| -> Option<GpModel> {
        let kernel = KernelParams::new(x[0].exp(), x[1].exp()).ok()?;
        let n = if config.learn_noise { NoiseModel::Constant((2.0 * x[2]).exp()) } else { noise.clone() };
        GpModel::fit(train.clone(), kernel, n, prior).ok()
    };
    let objective = |x: &[f64]| -> Option<(f64, Vec<f64>)> {
        let m = build(x)?;
        let f = -m.log_marginal_likelihood();
        let mut g: Vec<f64> = m.log_marginal_likelihood_gradient().iter().map(|v| -v).collect();
        g.truncate(x.len());
        (f.is_finite() && g.iter().all(|v| v.is_finite())).then_some((f, g))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for _ in 0..config.starts {
        let x0: Vec<f64> = bounds
            .lower
            .iter()
            .zip(&bounds.upper)
            .map(|(&l, &u)| if u > l { rng.random_range(l..=u) } else { l })
            .collect();
        if let Some((x, f)) = minimize_in_box(&objective, x0, &bounds, config.max_iter, config.gradient_tolerance) {
            if best.as_ref().is_none_or(|(_, fb)| f < *fb) {
                best = Some((x, f));
            }
        }
    }
    let (x, f) = best.ok_or_else(|| Error::OptimizationFailed("no start produced a finite likelihood".into()))?;
    let kernel = KernelParams::new(x[0].exp(), x[1].exp())?;
    let noise = if config.learn_noise { NoiseModel::Constant((2.0 * x[2]).exp()) } else { noise.clone() };
    Ok(Hyperparameters { kernel, noise, log_likelihood: -f })
}

fn project(x: &mut [f64], b: &SearchBox) {
    for (i, v) in x.iter_mut().enumerate() {
        *v = v.clamp(b.lower[i], b.upper[i]);
    }
}

fn projected_gradient(x: &[f64], g: &[f64], b: &SearchBox) -> Vec<f64> {
    x.iter()
        .zip(g)
        .enumerate()
        .map(|(i, (&xi, &gi))| {
            if (xi <= b.lower[i] && gi > 0.0) || (xi >= b.upper[i] && gi < 0.0) {
                0.0
            } else {
                gi
            }
        })
        .collect()
}

/// Box-constrained BFGS with a projected backtracking line search.
/// Returns `None` if the start point itself is infeasible.
pub(crate) fn minimize_in_box<F>(f: &F, mut x: Vec<f64>, b: &SearchBox, max_iter: usize, tol: f64) -> Option<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    project(&mut x, b);
    let n = x.len();
    let (mut fx, mut g) = f(&x)?;
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;

    for _ in 0..max_iter {
        let pg = projected_gradient(&x, &g, b);
        if pg.iter().all(|v| v.abs() < tol) {
            break;
        }
        let free: Vec<bool> = pg.iter().zip(&g).map(|(p, gi)| *p != 0.0 || *gi == 0.0).collect();
        let mut d: Vec<f64> = (-(&h * DVector::from_column_slice(&pg))).iter().cloned().collect();
        if fresh {
            // Without curvature information, cap the trial step at one unit.
            let scale = d.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            d.iter_mut().for_each(|v| *v /= scale);
        }
        for i in 0..n {
            if !free[i] {
                d[i] = 0.0;
            }
        }
        if d.iter().zip(&pg).map(|(a, b)| a * b).sum::<f64>() >= 0.0 {
            h = DMatrix::identity(n, n);
            fresh = true;
            let scale = pg.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            d = pg.iter().map(|v| -v / scale).collect();
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            project(&mut xn, b);
            let decrease: f64 = g.iter().zip(xn.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum();
            if let Some((fn_, gn)) = f(&xn) {
                if fn_ <= fx + 1e-4 * decrease && fn_ <= fx {
                    accepted = Some((xn, fn_, gn));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            if !fresh {
                h = DMatrix::identity(n, n);
                fresh = true;
                continue;
            }
            break;
        };

        let s = DVector::from_iterator(n, xn.iter().zip(&x).map(|(a, b)| a - b));
        let y = DVector::from_iterator(n, gn.iter().zip(&g).map(|(a, b)| a - b));
        let sy = s.dot(&y);
        let converged = (fx - fn_).abs() <= 1e-10 * fx.abs().max(fn_.abs()).max(1.0) || s.amax() < 1e-10;
        if sy > 1e-12 {
            if fresh {
                h *= sy / y.dot(&y);
                fresh = false;
            }
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(n, n);
            let left = &i - rho * &s * y.transpose();
            let right = &i - rho * &y * s.transpose();
            h = &left * &h * &right + rho * &s * s.transpose();
        }
        x = xn;
        fx = fn_;
        g = gn;
        if converged {
            break;
        }
    }
    Some((x, fx))
}
