//! Temporal alignment of demonstrations.
//!
//! Each sample is assigned its task completion index `ζ`, the normalized
//! cumulative SE(3) path length. Dynamic time warping over `|ζ_a − ζ_b|`
//! matches samples by task progress rather than by spatial proximity, which
//! keeps demonstrations that follow different paths in correspondence.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::se3::{pose_distance, DistanceWeights, Pose, RotationVector};

/// Timestamped pose sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    stamps: Vec<f64>,
    poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new(stamps: Vec<f64>, poses: Vec<Pose>) -> Result<Self> {
        if stamps.len() != poses.len() {
            return invalid(format!("{} stamps but {} poses", stamps.len(), poses.len()));
        }
        if stamps.len() < 2 {
            return invalid("a trajectory needs at least two samples");
        }
        if stamps.iter().any(|t| !t.is_finite()) {
            return invalid("non-finite timestamp");
        }
        if let Some(k) = stamps.windows(2).position(|w| w[1] <= w[0]) {
            return invalid(format!("timestamps not strictly increasing at sample {}", k + 1));
        }
        if poses.iter().any(|p| p.position.iter().any(|v| !v.is_finite())) {
            return invalid("non-finite position");
        }
        Ok(Self { stamps, poses })
    }

    pub fn stamps(&self) -> &[f64] {
        &self.stamps
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.stamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stamps.is_empty()
    }

    /// Same poses with time mapped affinely onto `[0, 1]`.
    pub fn normalized(&self) -> Trajectory {
        let t0 = self.stamps[0];
        let span = self.stamps[self.len() - 1] - t0;
        let stamps = self.stamps.iter().map(|t| (t - t0) / span).collect();
        Trajectory { stamps, poses: self.poses.clone() }
    }

    /// Sum of consecutive pose distances.
    pub fn path_length(&self, w: &DistanceWeights) -> f64 {
        self.poses.windows(2).map(|p| pose_distance(&p[1], &p[0], w)).sum()
    }

    /// Component `d` of `Pose::to_array` for every sample.
    pub fn component(&self, d: usize) -> Vec<f64> {
        self.poses.iter().map(|p| p.to_array()[d]).collect()
    }
}

/// Task completion index of every sample.
#[derive(Clone, Debug, PartialEq)]
pub struct TciProfile {
    zeta: Vec<f64>,
}

impl TciProfile {
    pub fn values(&self) -> &[f64] {
        &self.zeta
    }
}

/// `ζ(t_k) = Σ_{j≤k} d(s_j, s_{j−1}) / Σ_{j≤M} d(s_j, s_{j−1})`.
pub fn tci_profile(traj: &Trajectory, w: &DistanceWeights) -> Result<TciProfile> {
    let mut zeta = Vec::with_capacity(traj.len());
    let mut acc = 0.0;
    zeta.push(0.0);
    for p in traj.poses.windows(2) {
        acc += pose_distance(&p[1], &p[0], w);
        zeta.push(acc);
    }
    if !(acc > 0.0) || !acc.is_finite() {
        return Err(Error::DegenerateTrajectory("trajectory has zero total path length".into()));
    }
    for z in zeta.iter_mut() {
        *z /= acc;
    }
    *zeta.last_mut().expect("nonempty") = 1.0;
    Ok(TciProfile { zeta })
}

/// Local cost used by [`dtw_align`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DtwMeasure {
    /// Weighted SE(3) pose distance.
    EuclideanPose,
    /// Absolute difference of task completion indices.
    #[default]
    Tci,
}

/// Monotone, continuous index correspondence from `(0, 0)` to `(M_a, M_b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WarpPath {
    pub pairs: Vec<(usize, usize)>,
    pub cost: f64,
}

/// DTW over an `n × m` local-cost function with unit steps
/// `{(1,0), (0,1), (1,1)}` and no window.
///
/// Backtracking ties prefer the diagonal, then the step that advanced the
/// second (reference) sequence.
pub fn dtw_with_costs<F>(n: usize, m: usize, cost: F) -> WarpPath
where
    F: Fn(usize, usize) -> f64,
{
    assert!(n > 0 && m > 0, "empty sequence");
    let mut acc = vec![f64::INFINITY; n * m];
    let at = |i: usize, j: usize| i * m + j;
    for i in 0..n {
        for j in 0..m {
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let diag = if i > 0 && j > 0 { acc[at(i - 1, j - 1)] } else { f64::INFINITY };
                let left = if j > 0 { acc[at(i, j - 1)] } else { f64::INFINITY };
                let up = if i > 0 { acc[at(i - 1, j)] } else { f64::INFINITY };
                diag.min(left).min(up)
            };
            acc[at(i, j)] = cost(i, j) + best;
        }
    }

    let (mut i, mut j) = (n - 1, m - 1);
    let mut pairs = vec![(i, j)];
    while i > 0 || j > 0 {
        if i == 0 {
            j -= 1;
        } else if j == 0 {
            i -= 1;
        } else {
            let diag = acc[at(i - 1, j - 1)];
            let left = acc[at(i, j - 1)];
            let up = acc[at(i - 1, j)];
            if diag <= left && diag <= up {
                i -= 1;
                j -= 1;
            } else if left <= up {
                j -= 1;
            } else {
                i -= 1;
            }
        }
        pairs.push((i, j));
    }
    pairs.reverse();
    WarpPath { pairs, cost: acc[at(n - 1, m - 1)] }
}

/// Aligns trajectory `a` against the reference `b`.
pub fn dtw_align(a: &Trajectory, b: &Trajectory, w: &DistanceWeights, measure: DtwMeasure) -> Result<WarpPath> {
    Ok(match measure {
        DtwMeasure::EuclideanPose => dtw_with_costs(a.len(), b.len(), |i, j| pose_distance(&a.poses[i], &b.poses[j], w)),
        DtwMeasure::Tci => {
            let za = tci_profile(a, w)?;
            let zb = tci_profile(b, w)?;
            dtw_with_costs(a.len(), b.len(), |i, j| (za.zeta[i] - zb.zeta[j]).abs())
        }
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignConfig {
    pub measure: DtwMeasure,
}

/// A demonstration that was left out of the alignment.
#[derive(Clone, Debug, PartialEq)]
pub struct SkippedDemo {
    pub index: usize,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct Alignment {
    /// Aligned demonstrations, in input order, all on the reference clock.
    pub trajectories: Vec<Trajectory>,
    /// Input index of each entry of `trajectories`.
    pub source_indices: Vec<usize>,
    /// Input index of the reference demonstration.
    pub reference: usize,
    pub skipped: Vec<SkippedDemo>,
}

/// Warps every demonstration onto the normalized clock of a reference.
///
/// The reference is the demonstration with the median total path length.
/// Poses are carried along the warp path: when several samples map to one
/// reference index, positions are averaged and the rotation closest to the
/// mean rotation vector of the group is kept.
pub fn align_demonstrations(demos: &[Trajectory], w: &DistanceWeights, config: &AlignConfig) -> Result<Alignment> {
    if demos.is_empty() {
        return Err(Error::InsufficientData("no demonstrations to align".into()));
    }
    let mut valid = Vec::new();
    let mut skipped = Vec::new();
    for (i, d) in demos.iter().enumerate() {
        match tci_profile(d, w) {
            Ok(_) => valid.push((i, d.path_length(w))),
            Err(e) => {
                warn!("skipping demonstration {i}: {e}");
                skipped.push(SkippedDemo { index: i, reason: e.to_string() });
            }
        }
    }
    if valid.is_empty() {
        return Err(Error::DegenerateTrajectory("every demonstration is degenerate".into()));
    }
    let mut by_length = valid.clone();
    by_length.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let reference = by_length[(by_length.len() - 1) / 2].0;
    let ref_traj = demos[reference].normalized();

    let mut trajectories = Vec::with_capacity(valid.len());
    let mut source_indices = Vec::with_capacity(valid.len());
    for &(i, _) in &valid {
        let aligned = if i == reference {
            ref_traj.clone()
        } else {
            let path = dtw_align(&demos[i], &demos[reference], w, config.measure)?;
            warp_onto(&demos[i], &path, &ref_traj)?
        };
        trajectories.push(aligned);
        source_indices.push(i);
    }
    Ok(Alignment { trajectories, source_indices, reference, skipped })
}

fn warp_onto(demo: &Trajectory, path: &WarpPath, reference: &Trajectory) -> Result<Trajectory> {
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); reference.len()];
    for &(i, j) in &path.pairs {
        groups[j].push(i);
    }
    let poses = groups
        .iter()
        .map(|g| {
            let n = g.len() as f64;
            let position = g.iter().map(|&i| demo.poses[i].position).sum::<nalgebra::Vector3<f64>>() / n;
            let rotation = if g.len() == 1 {
                demo.poses[g[0]].rotation
            } else {
                let mean = g.iter().map(|&i| *demo.poses[i].rotation.vector()).sum::<nalgebra::Vector3<f64>>() / n;
                let mean = RotationVector::wrap(mean).unwrap_or_default();
                g.iter()
                    .map(|&i| demo.poses[i].rotation)
                    .min_by(|a, b| {
                        crate::se3::arc_distance(a, &mean).total_cmp(&crate::se3::arc_distance(b, &mean))
                    })
                    .expect("nonempty group")
            };
            Pose::new(position, rotation)
        })
        .collect();
    Trajectory::new(reference.stamps.clone(), poses)
}

/// Samples a trajectory at `grid`: positions linearly, rotations along the
/// geodesic between neighboring samples. Grid points that coincide with a
/// stamp return that sample exactly.
pub fn resample(traj: &Trajectory, grid: &[f64]) -> Result<Trajectory> {
    let (first, last) = (traj.stamps[0], traj.stamps[traj.len() - 1]);
    let mut poses = Vec::with_capacity(grid.len());
    for &t in grid {
        if !(t >= first && t <= last) {
            return invalid(format!("resample time {t} outside [{first}, {last}]"));
        }
        let pose = match traj.stamps.binary_search_by(|s| s.total_cmp(&t)) {
            Ok(k) => traj.poses[k],
            Err(k) => {
                let (t0, t1) = (traj.stamps[k - 1], traj.stamps[k]);
                let s = (t - t0) / (t1 - t0);
                let (a, b) = (&traj.poses[k - 1], &traj.poses[k]);
                Pose::new(a.position + (b.position - a.position) * s, a.rotation.geodesic(&b.rotation, s))
            }
        };
        poses.push(pose);
    }
    Trajectory::new(grid.to_vec(), poses)
}

/// `n` evenly spaced points on `[0, 1]`, with exact endpoints.
pub fn unit_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| if i == n - 1 { 1.0 } else { i as f64 / (n - 1) as f64 }).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn line(xs: &[f64]) -> Trajectory {
        let poses = xs.iter().map(|&x| Pose::new(Vector3::new(x, 0.0, 0.0), RotationVector::identity())).collect();
        Trajectory::new((0..xs.len()).map(|i| i as f64).collect(), poses).unwrap()
    }

    fn rot_z(angles: &[f64]) -> Trajectory {
        let poses = angles
            .iter()
            .map(|&a| Pose::new(Vector3::zeros(), RotationVector::from_array([0.0, 0.0, a]).unwrap()))
            .collect();
        Trajectory::new((0..angles.len()).map(|i| i as f64 * 0.5).collect(), poses).unwrap()
    }

    #[test]
    fn trajectory_validation() {
        assert!(Trajectory::new(vec![0.0], vec![Pose::default()]).is_err());
        assert!(Trajectory::new(vec![0.0, 0.0], vec![Pose::default(); 2]).is_err());
        assert!(Trajectory::new(vec![0.0, 1.0], vec![Pose::default(); 3]).is_err());
    }

    #[test]
    fn tci_translation_example() {
        let w = DistanceWeights::new(0.0, 1.0).unwrap();
        let z = tci_profile(&line(&[0.0, 1.0, 3.0]), &w).unwrap();
        assert_eq!(z.values()[0], 0.0);
        assert!((z.values()[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(z.values()[2], 1.0);
    }

    #[test]
    fn tci_rotation_example() {
        let w = DistanceWeights::new(1.0, 0.0).unwrap();
        let z = tci_profile(&rot_z(&[0.0, FRAC_PI_2, PI]), &w).unwrap();
        assert!((z.values()[1] - 0.5).abs() < 1e-12);
        assert_eq!(z.values()[2], 1.0);
    }

    #[test]
    fn tci_degenerate() {
        let w = DistanceWeights::default();
        assert!(matches!(tci_profile(&line(&[1.0, 1.0, 1.0]), &w), Err(Error::DegenerateTrajectory(_))));
    }

    #[test]
    fn tci_invariant_to_time_affine_and_spatial_scale() {
        let w = DistanceWeights::new(0.0, 1.0).unwrap();
        let a = line(&[0.0, 0.3, 0.35, 1.2, 2.0]);
        let stretched = Trajectory::new(a.stamps.iter().map(|t| 3.0 * t + 7.0).collect(), a.poses.clone()).unwrap();
        assert_eq!(tci_profile(&a, &w).unwrap(), tci_profile(&stretched, &w).unwrap());
        let scaled = line(&[0.0, 0.6, 0.7, 2.4, 4.0]);
        let (za, zs) = (tci_profile(&a, &w).unwrap(), tci_profile(&scaled, &w).unwrap());
        for (x, y) in za.values().iter().zip(zs.values()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_sequences_align_diagonally() {
        let a = line(&[0.0, 0.5, 1.5, 2.0]);
        for m in [DtwMeasure::EuclideanPose, DtwMeasure::Tci] {
            let p = dtw_align(&a, &a, &DistanceWeights::default(), m).unwrap();
            assert_eq!(p.cost, 0.0);
            assert_eq!(p.pairs, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
        }
    }

    #[test]
    fn warp_path_is_monotone_and_continuous() {
        let a = line(&[0.0, 0.1, 0.2, 1.0, 1.1, 3.0]);
        let b = line(&[0.0, 1.0, 2.0, 3.0]);
        let p = dtw_align(&a, &b, &DistanceWeights::default(), DtwMeasure::EuclideanPose).unwrap();
        assert_eq!(p.pairs[0], (0, 0));
        assert_eq!(*p.pairs.last().unwrap(), (5, 3));
        for w in p.pairs.windows(2) {
            let (di, dj) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            assert!(matches!((di, dj), (1, 0) | (0, 1) | (1, 1)));
        }
    }

    #[test]
    fn tci_cost_zero_for_same_path_different_speed() {
        // Same geometric path, different timing, identical arc-length sampling.
        let a = line(&[0.0, 0.5, 1.0, 2.0]);
        let b = Trajectory::new(vec![0.0, 0.1, 0.7, 3.0], a.poses.clone()).unwrap();
        let p = dtw_align(&a, &b, &DistanceWeights::default(), DtwMeasure::Tci).unwrap();
        assert_eq!(p.cost, 0.0);
    }

    #[test]
    fn single_demo_is_time_normalized() {
        let a = line(&[0.0, 0.5, 2.0]);
        let al = align_demonstrations(&[a.clone()], &DistanceWeights::default(), &AlignConfig::default()).unwrap();
        assert_eq!(al.trajectories.len(), 1);
        assert_eq!(al.trajectories[0].stamps(), &[0.0, 0.5, 1.0]);
        assert_eq!(al.trajectories[0].poses(), a.poses());
    }

    #[test]
    fn degenerate_demos_are_skipped() {
        let demos = [line(&[0.0, 1.0, 2.0]), line(&[1.0, 1.0, 1.0]), line(&[0.0, 0.5, 1.0, 2.0])];
        let al = align_demonstrations(&demos, &DistanceWeights::default(), &AlignConfig::default()).unwrap();
        assert_eq!(al.skipped.len(), 1);
        assert_eq!(al.skipped[0].index, 1);
        assert_eq!(al.source_indices, vec![0, 2]);
        assert!(al.trajectories.iter().all(|t| t.stamps() == al.trajectories[0].stamps()));
        let only_bad = [line(&[1.0, 1.0])];
        assert!(align_demonstrations(&only_bad, &DistanceWeights::default(), &AlignConfig::default()).is_err());
    }

    #[test]
    fn median_length_reference() {
        let demos = [line(&[0.0, 3.0]), line(&[0.0, 1.0]), line(&[0.0, 2.0])];
        let al = align_demonstrations(&demos, &DistanceWeights::default(), &AlignConfig::default()).unwrap();
        assert_eq!(al.reference, 2);
    }

    #[test]
    fn resample_examples() {
        let a = line(&[0.0, 2.0]);
        let r = resample(&a, &[0.0, 0.5, 1.0]).unwrap();
        assert!((r.poses()[1].position - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
        let same = resample(&a, a.stamps()).unwrap();
        assert_eq!(same, a);

        let b = rot_z(&[0.0, FRAC_PI_2]);
        let mid = resample(&b, &[0.25, 0.5]).unwrap();
        assert!((mid.poses()[0].rotation.vector() - Vector3::new(0.0, 0.0, PI / 4.0)).norm() < 1e-14);

        assert!(resample(&a, &[-0.1, 0.5]).is_err());
        assert!(resample(&a, &[0.5, 1.5]).is_err());
    }

    #[test]
    fn unit_grid_has_exact_endpoints() {
        let g = unit_grid(7);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[6], 1.0);
        assert_eq!(g.len(), 7);
    }
}
