//! Axis-angle rotations, SE(3) poses and the weighted SE(3) distance.
//!
//! Rotations are stored as rotation vectors `θ·u` inside the closed ball of
//! radius π. At `θ = π` the axis is fixed to the canonical hemisphere
//! (`u_z > 0`, or `u_z = 0 ∧ u_y > 0`, or `u_z = u_y = 0 ∧ u_x > 0`), which makes
//! the parameterization unique. Quaternions are always scalar-first
//! `(w, x, y, z)`.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;

use crate::error::{invalid, Error, Result};

/// Tolerance on `|θ − π|` under which the hemisphere rule is applied.
pub const PI_TOLERANCE: f64 = 1e-9;
/// Below this angle the axis is undefined and reported as `(1, 0, 0)`.
pub const IDENTITY_ANGLE: f64 = 1e-12;
/// Accepted deviation of a quaternion norm from one.
pub const QUATERNION_NORM_TOLERANCE: f64 = 1e-6;

const COMPONENT_ZERO: f64 = 1e-12;

/// Canonical rotation vector `θ·u` with `θ ∈ [0, π]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationVector {
    v: Vector3<f64>,
}

impl Default for RotationVector {
    fn default() -> Self {
        Self::identity()
    }
}

impl RotationVector {
    pub fn identity() -> Self {
        Self { v: Vector3::zeros() }
    }

    /// Validates that `v` lies in the closed π-ball and canonicalizes it.
    pub fn new(v: Vector3<f64>) -> Result<Self> {
        let theta = v.norm();
        if !theta.is_finite() {
            return invalid("rotation vector has non-finite components");
        }
        if theta > PI + PI_TOLERANCE {
            return invalid(format!("rotation vector norm {theta} exceeds π"));
        }
        if theta == 0.0 {
            return Ok(Self::identity());
        }
        canonicalize_rotation(&(v / theta), theta.min(PI))
    }

    /// Maps an arbitrary finite vector `a·u` to the canonical representative
    /// of the same rotation, wrapping angles outside `[0, π]`.
    pub fn wrap(v: Vector3<f64>) -> Result<Self> {
        let theta = v.norm();
        if !theta.is_finite() {
            return invalid("rotation vector has non-finite components");
        }
        if theta == 0.0 {
            return Ok(Self::identity());
        }
        canonicalize_rotation(&(v / theta), theta)
    }

    pub fn from_array(a: [f64; 3]) -> Result<Self> {
        Self::new(Vector3::from(a))
    }

    pub fn vector(&self) -> &Vector3<f64> {
        &self.v
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.v.x, self.v.y, self.v.z]
    }

    pub fn angle(&self) -> f64 {
        self.v.norm()
    }

    /// Unit rotation axis; `(1, 0, 0)` for (near-)identity rotations.
    pub fn axis(&self) -> Vector3<f64> {
        let theta = self.angle();
        if theta < IDENTITY_ANGLE {
            Vector3::x()
        } else {
            self.v / theta
        }
    }

    /// Scalar-first unit quaternion of this rotation.
    pub fn to_quaternion(&self) -> [f64; 4] {
        let theta = self.angle();
        if theta == 0.0 {
            return [1.0, 0.0, 0.0, 0.0];
        }
        let (s, c) = (theta / 2.0).sin_cos();
        let u = self.v / theta;
        [c, s * u.x, s * u.y, s * u.z]
    }

    /// Point at fraction `s ∈ [0, 1]` of the geodesic from `self` to `other`.
    pub fn geodesic(&self, other: &RotationVector, s: f64) -> RotationVector {
        if s == 0.0 {
            return *self;
        }
        if s == 1.0 {
            return *other;
        }
        let qa = self.to_quaternion();
        let qb = other.to_quaternion();
        let mut rel = quat_mul(&quat_conj(&qa), &qb);
        if rel[0] < 0.0 {
            rel = rel.map(|c| -c);
        }
        let step = scaled_log(&rel) * s;
        let q = quat_mul(&qa, &quat_exp(&step));
        rotvec_of_unit(&q)
    }

    /// Rotation matrix of this rotation vector (Rodrigues' formula).
    pub fn to_matrix(&self) -> nalgebra::Matrix3<f64> {
        let theta = self.angle();
        if theta == 0.0 {
            return nalgebra::Matrix3::identity();
        }
        let u = self.v / theta;
        let k = u.cross_matrix();
        nalgebra::Matrix3::identity() + k * theta.sin() + k * k * (1.0 - theta.cos())
    }
}

/// Builds the canonical rotation vector for a rotation of `angle` radians
/// about `axis` (any nonzero length).
pub fn canonicalize_rotation(axis: &Vector3<f64>, angle: f64) -> Result<RotationVector> {
    if !angle.is_finite() || axis.iter().any(|c| !c.is_finite()) {
        return invalid("axis-angle input is not finite");
    }
    let norm = axis.norm();
    if norm == 0.0 {
        if angle == 0.0 {
            return Ok(RotationVector::identity());
        }
        return invalid("zero-norm axis with nonzero angle");
    }
    let mut u = axis / norm;
    let mut theta = angle.rem_euclid(TAU);
    if theta > PI {
        theta = TAU - theta;
        u = -u;
    }
    if theta == 0.0 {
        return Ok(RotationVector::identity());
    }
    if (theta - PI).abs() <= PI_TOLERANCE {
        theta = PI;
        if in_negative_hemisphere(&u) {
            u = -u;
        }
    }
    Ok(RotationVector { v: u * theta })
}

fn in_negative_hemisphere(u: &Vector3<f64>) -> bool {
    if u.z < -COMPONENT_ZERO {
        return true;
    }
    if u.z.abs() <= COMPONENT_ZERO {
        if u.y < -COMPONENT_ZERO {
            return true;
        }
        if u.y.abs() <= COMPONENT_ZERO {
            return u.x < 0.0;
        }
    }
    false
}

/// Converts a scalar-first unit quaternion `(w, x, y, z)` to the canonical
/// rotation vector. `q` and `−q` yield the same result.
pub fn rotvec_from_quaternion(q: [f64; 4]) -> Result<RotationVector> {
    let n = q.iter().map(|c| c * c).sum::<f64>().sqrt();
    if !n.is_finite() || (n - 1.0).abs() > QUATERNION_NORM_TOLERANCE {
        return invalid(format!("quaternion norm {n} is not within 1e-6 of 1"));
    }
    Ok(rotvec_of_unit(&q.map(|c| c / n)))
}

fn rotvec_of_unit(q: &[f64; 4]) -> RotationVector {
    let (w, v) = if q[0] < 0.0 {
        (-q[0], Vector3::new(-q[1], -q[2], -q[3]))
    } else {
        (q[0], Vector3::new(q[1], q[2], q[3]))
    };
    let s = v.norm();
    if s == 0.0 {
        return RotationVector::identity();
    }
    let theta = 2.0 * s.atan2(w);
    // Cannot fail: the axis is nonzero and both inputs are finite.
    canonicalize_rotation(&(v / s), theta).unwrap_or_default()
}

fn quat_mul(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

fn quat_conj(q: &[f64; 4]) -> [f64; 4] {
    [q[0], -q[1], -q[2], -q[3]]
}

// Rotation vector of a unit quaternion with nonnegative scalar part.
fn scaled_log(q: &[f64; 4]) -> Vector3<f64> {
    let v = Vector3::new(q[1], q[2], q[3]);
    let s = v.norm();
    if s == 0.0 {
        return Vector3::zeros();
    }
    v * (2.0 * s.atan2(q[0]) / s)
}

fn quat_exp(r: &Vector3<f64>) -> [f64; 4] {
    let theta = r.norm();
    if theta == 0.0 {
        return [1.0, 0.0, 0.0, 0.0];
    }
    let (s, c) = (theta / 2.0).sin_cos();
    let u = r / theta;
    [c, s * u.x, s * u.y, s * u.z]
}

/// Geodesic distance between two rotations, in `[0, π]`.
///
/// Equal to `2·acos|q_a·q_b|`, evaluated as the angle between the unit
/// quaternions in the same hemisphere so that nearby rotations keep full
/// precision.
pub fn arc_distance(a: &RotationVector, b: &RotationVector) -> f64 {
    let qa = a.to_quaternion();
    let mut qb = b.to_quaternion();
    if qa.iter().zip(&qb).map(|(x, y)| x * y).sum::<f64>() < 0.0 {
        qb = qb.map(|v| -v);
    }
    let diff = qa.iter().zip(&qb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let sum = qa.iter().zip(&qb).map(|(x, y)| (x + y).powi(2)).sum::<f64>().sqrt();
    4.0 * diff.atan2(sum)
}

/// Rigid pose: translation plus canonical rotation vector.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub rotation: RotationVector,
}

impl Pose {
    pub fn new(position: Vector3<f64>, rotation: RotationVector) -> Self {
        Self { position, rotation }
    }

    /// `(x, y, z, θu_x, θu_y, θu_z)`.
    pub fn to_array(&self) -> [f64; 6] {
        let r = self.rotation.to_array();
        [self.position.x, self.position.y, self.position.z, r[0], r[1], r[2]]
    }

    /// Inverse of [`Pose::to_array`]; the rotation part is re-canonicalized.
    pub fn from_array(a: [f64; 6]) -> Result<Self> {
        Ok(Self {
            position: Vector3::new(a[0], a[1], a[2]),
            rotation: RotationVector::wrap(Vector3::new(a[3], a[4], a[5]))?,
        })
    }
}

/// Convex weights of the rotational and translational terms of
/// [`pose_distance`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistanceWeights {
    rotation: f64,
    translation: f64,
}

impl Default for DistanceWeights {
    fn default() -> Self {
        Self { rotation: 0.5, translation: 0.5 }
    }
}

impl DistanceWeights {
    pub fn new(rotation: f64, translation: f64) -> Result<Self> {
        if !(rotation >= 0.0 && translation >= 0.0) {
            return invalid("distance weights must be nonnegative");
        }
        if ((rotation + translation) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "distance weights must sum to 1, got {}",
                rotation + translation
            )));
        }
        Ok(Self { rotation, translation })
    }

    pub fn rotation(&self) -> f64 {
        self.rotation
    }

    pub fn translation(&self) -> f64 {
        self.translation
    }
}

/// Weighted SE(3) distance `sqrt(ω₁·d_arc² + ω₂·‖Δv‖²)`.
pub fn pose_distance(a: &Pose, b: &Pose, w: &DistanceWeights) -> f64 {
    let arc = arc_distance(&a.rotation, &b.rotation);
    let dv = (a.position - b.position).norm_squared();
    (w.rotation * arc * arc + w.translation * dv).sqrt()
}
