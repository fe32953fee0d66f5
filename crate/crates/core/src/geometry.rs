//! Rigid transforms in SE(3) and small vector helpers shared across the pipeline.

use nalgebra::{Matrix3, Matrix4, Quaternion, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Orthonormality tolerance for rotation matrices.
pub const ROTATION_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum TransformError {
    #[error("rotation is not orthonormal (max |RᵀR - I| = {0:e})")]
    NotOrthonormal(f64),
    #[error("rotation has negative determinant {0}")]
    Reflection(f64),
    #[error("quaternion has zero norm")]
    ZeroQuaternion,
    #[error("non-finite transform component")]
    NonFinite,
}

/// A proper rigid motion `x ↦ R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).abs().max()
}

/// Nearest rotation in the Frobenius sense (polar factor via SVD).
fn reorthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut fixed = u * v_t;
    if fixed.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        fixed = u * v_t;
    }
    fixed
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Validating constructor.
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self, TransformError> {
        if rotation.iter().chain(translation.iter()).any(|x| !x.is_finite()) {
            return Err(TransformError::NonFinite);
        }
        let err = orthonormality_error(&rotation);
        if err > ROTATION_TOL {
            return Err(TransformError::NotOrthonormal(err));
        }
        let det = rotation.determinant();
        if det <= 0.0 {
            return Err(TransformError::Reflection(det));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation about a unit axis (normalized internally) followed by a translation.
    pub fn from_axis_angle(axis: Vec3, angle: f64, translation: Vec3) -> Self {
        let rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
        Self {
            rotation: *rot.matrix(),
            translation,
        }
    }

    /// From a `[w, x, y, z]` quaternion (normalized internally).
    pub fn from_quaternion_wxyz(q: [f64; 4], translation: Vec3) -> Result<Self, TransformError> {
        let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
        if !(quat.norm() > 0.0) || !quat.norm().is_finite() {
            return Err(TransformError::ZeroQuaternion);
        }
        let unit = UnitQuaternion::from_quaternion(quat);
        Self::new(*unit.to_rotation_matrix().matrix(), translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    /// Unit quaternion `[w, x, y, z]` with `w ≥ 0`.
    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        rotation_to_quaternion_wxyz(&self.rotation)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        let mut rotation = self.rotation * other.rotation;
        if orthonormality_error(&rotation) > ROTATION_TOL {
            rotation = reorthonormalize(&rotation);
        }
        RigidTransform {
            rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Rotation angle (radians) of the relative rotation between two transforms.
    pub fn rotation_angle_to(&self, other: &RigidTransform) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }
}

/// Rotation matrix to `[w, x, y, z]`, sign fixed so that `w ≥ 0`.
pub fn rotation_to_quaternion_wxyz(r: &Matrix3<f64>) -> [f64; 4] {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r));
    let mut out = [q.w, q.i, q.j, q.k];
    if out[0] < 0.0 {
        out.iter_mut().for_each(|c| *c = -*c);
    }
    out
}

pub fn quaternion_wxyz_to_rotation(q: [f64; 4]) -> Matrix3<f64> {
    let unit = UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]));
    *unit.to_rotation_matrix().matrix()
}

/// Pose object used by sidecars and pose lists: `{quaternion wxyz, translation xyz}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRecord {
    pub quaternion: [f64; 4],
    pub translation: [f64; 3],
}

impl PoseRecord {
    pub fn to_transform(&self) -> Result<RigidTransform, TransformError> {
        RigidTransform::from_quaternion_wxyz(self.quaternion, Vec3::from(self.translation))
    }

    pub fn from_transform(t: &RigidTransform) -> Self {
        Self {
            quaternion: t.quaternion_wxyz(),
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

/// Any unit vector perpendicular to `v` (deterministic choice).
pub fn any_perpendicular(v: &Vec3) -> Vec3 {
    let a = v.abs();
    let helper = if a.x <= a.y && a.x <= a.z {
        Vec3::x()
    } else if a.y <= a.z {
        Vec3::y()
    } else {
        Vec3::z()
    };
    (helper - v * (helper.dot(v) / v.norm_squared())).normalize()
}

/// Closest distance from `p` to the segment `[a, b]`.
pub fn point_segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let s = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * s)).norm()
}

/// Closest distance from `p` to a polyline.
pub fn point_polyline_distance(p: &Vec3, polyline: &[Vec3]) -> f64 {
    match polyline {
        [] => f64::INFINITY,
        [only] => (p - only).norm(),
        _ => polyline
            .windows(2)
            .map(|w| point_segment_distance(p, &w[0], &w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}
