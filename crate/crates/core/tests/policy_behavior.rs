use std::sync::OnceLock;

use gplfd::alignment::{align_demonstrations, resample, unit_grid, AlignConfig, Trajectory};
use gplfd::gp::{HeteroConfig, OptConfig};
use gplfd::io::{generate_synthetic_door_set, load_policy, save_policy, DoorSetConfig};
use gplfd::policy::{
    adapt_with_viapoints, learn_policy, learn_policy_from_aligned, LearnConfig, TaskPolicy, ViaPoint, ViaPointAdapter,
    DIMS,
};
use gplfd::se3::{DistanceWeights, Pose, RotationVector};
use gplfd::Error;
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn quick_config(grid_size: usize) -> LearnConfig {
    let hetero = HeteroConfig { opt: OptConfig { starts: 4, ..OptConfig::default() }, ..HeteroConfig::default() };
    LearnConfig::new(grid_size, DistanceWeights::default(), AlignConfig::default(), hetero)
}

fn door_demos() -> Vec<Trajectory> {
    generate_synthetic_door_set(5, &DoorSetConfig::default()).unwrap()
}

fn door_policy() -> &'static TaskPolicy {
    static POLICY: OnceLock<TaskPolicy> = OnceLock::new();
    POLICY.get_or_init(|| learn_policy(&door_demos(), &quick_config(50)).unwrap())
}

/// Demos on `[0, 1]` built from a smooth base path; `x_offset[k]` scales a
/// bump added to the x coordinate of demo `k`.
fn bumped_demos(x_offset: &[f64]) -> Vec<Trajectory> {
    let grid = unit_grid(60);
    x_offset
        .iter()
        .map(|&c| {
            let poses = grid
                .iter()
                .map(|&s| {
                    let bump = c * (std::f64::consts::PI * s).sin();
                    Pose::new(
                        Vector3::new(0.3 * s + bump, 0.2 * s * s, -0.1 * s),
                        RotationVector::from_array([0.1 * s, 0.0, 0.4 * s]).unwrap(),
                    )
                })
                .collect();
            Trajectory::new(grid.clone(), poses).unwrap()
        })
        .collect()
}

#[test]
fn door_uncertainty_grows_with_radius_divergence() {
    let demos = door_demos();
    let aligned = align_demonstrations(&demos, &DistanceWeights::default(), &AlignConfig::default()).unwrap();
    let grid = door_policy().grid().to_vec();
    let sampled: Vec<Trajectory> = aligned.trajectories.iter().map(|t| resample(t, &grid).unwrap()).collect();
    let pred = door_policy().query(&grid);
    for d in [0, 2] {
        let spread = |k: usize| {
            let v: Vec<f64> = sampled.iter().map(|s| s.component(d)[k]).collect();
            v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min)
        };
        let widest = (0..grid.len()).max_by(|&a, &b| spread(a).total_cmp(&spread(b))).unwrap();
        let ratio = pred[0].std()[d] / pred[widest].std()[d];
        assert!(ratio <= 0.2, "dimension {d}: std ratio {ratio}");
    }
}

#[test]
fn dispersion_in_x_only_stays_in_x() {
    let policy = learn_policy_from_aligned(&bumped_demos(&[-0.05, -0.02, 0.0, 0.03, 0.05]), &quick_config(40)).unwrap();
    let t = unit_grid(21);
    let r = policy.noise_variance(&t);
    let x_peak = r.iter().map(|v| v[0]).fold(0.0, f64::max);
    for d in 1..DIMS {
        let peak = r.iter().map(|v| v[d]).fold(0.0, f64::max);
        assert!(peak < 1e-6 && peak * 100.0 < x_peak, "dimension {d}: r {peak} vs x {x_peak}");
    }
}

#[test]
fn identical_demos_sit_on_the_noise_floor() {
    let config = quick_config(30);
    let policy = learn_policy_from_aligned(&bumped_demos(&[0.0, 0.0, 0.0]), &config).unwrap();
    for (d, m) in policy.dims().iter().enumerate() {
        assert!(m.degenerate_noise(), "dimension {d}");
        for r in m.noise_variance(&unit_grid(11)) {
            assert_eq!(r, config.hetero.noise_floor);
        }
    }
}

#[test]
fn clustered_demos_predict_their_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let noise = Normal::new(0.0, 0.002).unwrap();
    let demos: Vec<Trajectory> = bumped_demos(&[0.0; 5])
        .into_iter()
        .map(|d| {
            let poses = d
                .poses()
                .iter()
                .map(|p| Pose::from_array(p.to_array().map(|v| v + noise.sample(&mut rng))).unwrap())
                .collect();
            Trajectory::new(d.stamps().to_vec(), poses).unwrap()
        })
        .collect();
    let policy = learn_policy_from_aligned(&demos, &quick_config(60)).unwrap();
    let grid = policy.grid().to_vec();
    let pred = policy.query(&grid);
    for d in 0..DIMS {
        let mut sum_var = 0.0;
        let mut means = Vec::new();
        for k in 0..grid.len() {
            let values: Vec<f64> = demos.iter().map(|s| s.component(d)[k]).collect();
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            sum_var += values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
            means.push(mean);
        }
        let pooled = (sum_var / grid.len() as f64).sqrt();
        for (p, mean) in pred.iter().zip(&means) {
            assert!((p.mean[d] - mean).abs() <= 2.0 * pooled, "t {} dim {d}", p.t);
        }
    }
}

#[test]
fn far_extrapolation_reverts_to_prior() {
    let policy = door_policy();
    assert!(policy.query(&[2.0])[0].extrapolated);
    let offsets = policy.offsets();
    let edge = policy.query(&[1.0])[0];
    for d in 0..DIMS {
        // Four length-scales past the data the kernel correlation is e^-8.
        let params = policy.dims()[d].signal().params();
        let p = policy.query(&[1.0 + 4.0 * params.length_scale()])[0];
        assert!(p.extrapolated);
        assert!(p.var[d] >= 0.9 * params.signal_variance(), "dimension {d}");
        assert!((p.mean[d] - offsets[d]).abs() <= (edge.mean[d] - offsets[d]).abs() + 1e-9, "dimension {d}");
    }
}

#[test]
fn fewer_than_two_demos_is_an_error() {
    let one = &door_demos()[..1];
    assert!(matches!(learn_policy(one, &quick_config(20)), Err(Error::InsufficientData(_))));
}

#[test]
fn demonstration_side_is_cached() {
    let policy = door_policy();
    let t = unit_grid(41);
    let adapter = ViaPointAdapter::new(policy, &t);
    let before: Vec<_> = adapter.demonstration_posterior().to_vec();
    let pose_at = |s: f64| policy.query(&[s])[0].pose();
    let a = [ViaPoint::new(0.3, pose_at(0.3), [1e-4; DIMS]).unwrap()];
    let b = [ViaPoint::new(0.8, pose_at(0.7), [1e-3; DIMS]).unwrap()];
    let first = adapter.adapt(&a).unwrap();
    adapter.adapt(&b).unwrap();
    let again = adapter.adapt(&a).unwrap();
    assert_eq!(adapter.demonstration_posterior(), &before[..]);
    assert_eq!(first, again);
    assert_eq!(first, adapt_with_viapoints(policy, &a, &t).unwrap());
}

#[test]
fn weak_via_points_leave_the_policy_unchanged() {
    let policy = door_policy();
    let t = unit_grid(41);
    let base = policy.query(&t);
    let far = Pose::new(Vector3::new(1.0, 1.0, 1.0), RotationVector::from_array([0.5, 0.5, 0.5]).unwrap());
    let via = [ViaPoint::new(0.5, far, [1e9; DIMS]).unwrap()];
    let adapted = adapt_with_viapoints(policy, &via, &t).unwrap();
    for (a, b) in adapted.iter().zip(&base) {
        for d in 0..DIMS {
            assert!((a.mean[d] - b.mean[d]).abs() <= 1e-6 * b.mean[d].abs().max(b.var[d].sqrt()));
            assert!((a.var[d] - b.var[d]).abs() <= 1e-6 * b.var[d]);
        }
    }
}

#[test]
fn fusion_contracts_variance_and_keeps_rotations_canonical() {
    let policy = door_policy();
    let t = unit_grid(41);
    let base = policy.query(&t);
    let strength = [2e-4; DIMS];
    let target = Pose::new(Vector3::new(0.2, 0.0, -0.1), RotationVector::from_array([0.0, 0.9, 0.0]).unwrap());
    let via = [ViaPoint::new(0.5, target, strength).unwrap()];
    let adapted = adapt_with_viapoints(policy, &via, &t).unwrap();
    let k = t.iter().position(|&s| s == 0.5).unwrap();
    for (i, (a, b)) in adapted.iter().zip(&base).enumerate() {
        for d in 0..DIMS {
            assert!(a.var[d] >= 0.0 && a.var[d] <= b.var[d] * (1.0 + 1e-12));
            if i == k {
                assert!(a.var[d] <= strength[d].min(b.var[d]));
            }
        }
        assert!(a.pose().rotation.angle() <= std::f64::consts::PI);
    }
}

#[test]
fn conflicting_hard_via_points_are_rejected() {
    let policy = door_policy();
    let p = Pose::default();
    let q = Pose::new(Vector3::new(0.1, 0.0, 0.0), RotationVector::identity());
    let via = [
        ViaPoint::new(0.5, p, [gplfd::policy::HARD_STRENGTH; DIMS]).unwrap(),
        ViaPoint::new(0.5, q, [gplfd::policy::HARD_STRENGTH; DIMS]).unwrap(),
    ];
    assert!(matches!(adapt_with_viapoints(policy, &via, &[0.5]), Err(Error::InconsistentConstraint(_))));
}

#[test]
fn saved_policy_reloads_identically() {
    let policy = door_policy();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("policy.json");
    save_policy(&path, policy).unwrap();
    let loaded = load_policy(&path).unwrap();
    let t: Vec<f64> = (0..=30).map(|i| -0.2 + i as f64 * 0.05).collect();
    assert_eq!(loaded.query(&t), policy.query(&t));
}
