//! Synthetic demonstration sets.
//!
//! Door set: the handle of a door of radius `r` hinged at `(0, 0, −r)` is
//! pulled open by a quarter turn. With door angle `φ` the handle sits at
//! `(r sin φ, 0, r (cos φ − 1))` and the gripper is rotated by `φ` about `y`.
//! Every demonstration gets its own duration, sample count and speed profile.
//!
//! Shelf set: straight-line placements from the origin onto a low or a high
//! shelf; the high shelf is twice as high. Within a family the reach depth
//! varies.

use std::f64::consts::{FRAC_PI_2, TAU};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::alignment::{unit_grid, Trajectory};
use crate::error::{invalid, Result};
use crate::se3::{Pose, RotationVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DoorSetConfig {
    pub radii: Vec<f64>,
    pub repeats: usize,
    /// Standard deviation of the per-sample position noise (m).
    pub noise: f64,
    pub duration: (f64, f64),
    pub samples: (usize, usize),
    /// Amplitude of the speed-profile perturbation, in `[0, 1)`.
    pub speed_variation: f64,
}

impl Default for DoorSetConfig {
    fn default() -> Self {
        Self {
            radii: vec![0.7, 0.8, 0.9],
            repeats: 2,
            noise: 0.005,
            duration: (3.0, 6.0),
            samples: (80, 150),
            speed_variation: 0.6,
        }
    }
}

impl DoorSetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.radii.is_empty() || self.radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return invalid("door radii must be positive");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return invalid("noise must be nonnegative");
        }
        if !(self.duration.0 > 0.0 && self.duration.0 <= self.duration.1) {
            return invalid("duration range must be positive and ordered");
        }
        if !(self.samples.0 >= 2 && self.samples.0 <= self.samples.1) {
            return invalid("sample range must be ordered and at least 2");
        }
        if !(0.0..1.0).contains(&self.speed_variation) {
            return invalid("speed variation must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Door handle pose at door angle `phi`.
pub fn door_pose(radius: f64, phi: f64) -> Pose {
    Pose::new(
        Vector3::new(radius * phi.sin(), 0.0, radius * (phi.cos() - 1.0)),
        RotationVector::from_array([0.0, phi, 0.0]).expect("angle below π"),
    )
}

// Monotone progress s(τ) on [0, 1] with s(0) = 0, s(1) = 1.
fn progress(tau: f64, a: f64) -> f64 {
    tau + a * (TAU * tau).sin() / TAU
}

fn door_demo(radius: f64, cfg: &DoorSetConfig, rng: &mut ChaCha8Rng) -> Trajectory {
    let duration = rng.random_range(cfg.duration.0..=cfg.duration.1);
    let samples = rng.random_range(cfg.samples.0..=cfg.samples.1);
    let a = if cfg.speed_variation > 0.0 { rng.random_range(-cfg.speed_variation..cfg.speed_variation) } else { 0.0 };
    let noise = Normal::new(0.0, cfg.noise).expect("valid noise");
    let grid = unit_grid(samples);
    let poses = grid
        .iter()
        .map(|&tau| {
            let mut p = door_pose(radius, FRAC_PI_2 * progress(tau, a));
            for v in p.position.iter_mut() {
                *v += noise.sample(rng);
            }
            p
        })
        .collect();
    Trajectory::new(grid.iter().map(|t| t * duration).collect(), poses).expect("valid synthetic trajectory")
}

/// `repeats` demonstrations per radius, grouped by radius.
pub fn generate_synthetic_door_set(seed: u64, cfg: &DoorSetConfig) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(cfg.radii.iter().flat_map(|&r| (0..cfg.repeats).map(move |_| r)).map(|r| door_demo(r, cfg, &mut rng)).collect())
}

/// One further door opening, drawn from a stream independent of the
/// demonstration set of the same seed.
pub fn door_ground_truth(seed: u64, radius: f64, cfg: &DoorSetConfig) -> Result<Trajectory> {
    cfg.validate()?;
    if !(radius > 0.0 && radius.is_finite()) {
        return invalid("door radius must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    Ok(door_demo(radius, cfg, &mut rng))
}

#[derive(Clone, Debug)]
pub struct ShelfDemo {
    /// 0 for the low shelf, 1 for the high shelf.
    pub family: usize,
    pub trajectory: Trajectory,
}

/// Height of the low shelf; the high shelf is at twice this height.
pub const SHELF_HEIGHT: f64 = 0.4;

/// `per_family` placements onto each shelf, low family first. Positions are
/// `(x, height, 0)` with reach depth drawn from `[0.05, 0.15]`.
pub fn generate_shelf_set(seed: u64, per_family: usize, noise: f64) -> Result<Vec<ShelfDemo>> {
    if !(noise >= 0.0 && noise.is_finite()) {
        return invalid("noise must be nonnegative");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise).expect("valid noise");
    let mut out = Vec::with_capacity(2 * per_family);
    for family in 0..2 {
        let height = SHELF_HEIGHT * (family + 1) as f64;
        for _ in 0..per_family {
            let depth = rng.random_range(0.05..=0.15);
            let samples = rng.random_range(60..=90);
            let a = rng.random_range(-0.5..0.5);
            let grid = unit_grid(samples);
            let poses = grid
                .iter()
                .map(|&tau| {
                    let s = progress(tau, a);
                    let mut v = Vector3::new(depth * s, height * s, 0.0);
                    for c in v.iter_mut() {
                        *c += normal.sample(&mut rng);
                    }
                    Pose::new(v, RotationVector::identity())
                })
                .collect();
            let duration = rng.random_range(2.0..=4.0);
            let trajectory = Trajectory::new(grid.iter().map(|t| t * duration).collect(), poses)?;
            out.push(ShelfDemo { family, trajectory });
        }
    }
    Ok(out)
}
