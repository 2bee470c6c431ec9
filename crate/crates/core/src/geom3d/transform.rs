use nalgebra::{Matrix3, Rotation3, Unit};
use serde::{Deserialize, Serialize};

use super::{GeomError, Vec3};

const ORTHONORMAL_TOL: f64 = 1e-9;

/// A proper rigid motion `p -> R p + t`.
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

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Builds a transform, checking that `rotation` is orthonormal with
    /// determinant +1 (within 1e-9).
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self, GeomError> {
        check_rotation(&rotation)?;
        if !translation.iter().all(|c| c.is_finite()) {
            return Err(GeomError::NotARotation("non-finite translation".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub(crate) fn from_parts_unchecked(rotation: Matrix3<f64>, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation by `angle` radians about the unit `axis`, through the origin.
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let axis = Unit::new_normalize(*axis);
        Self {
            rotation: Rotation3::from_axis_angle(&axis, angle).into_inner(),
            translation: Vec3::zeros(),
        }
    }

    /// Pure rotation about +z.
    pub fn rot_z(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self {
            rotation: Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
            translation: Vec3::zeros(),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// Rotates a direction (no translation).
    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
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

    /// Homogeneous 4×4 matrix, row-major.
    pub fn to_matrix4(&self) -> [[f64; 4]; 4] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            [r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x],
            [r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y],
            [r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    /// Parses a row-major homogeneous matrix. The bottom row must be
    /// `[0, 0, 0, 1]` and the rotation block must be proper.
    pub fn from_matrix4(m: &[[f64; 4]; 4]) -> Result<Self, GeomError> {
        let bottom = m[3];
        if bottom[0].abs() > ORTHONORMAL_TOL
            || bottom[1].abs() > ORTHONORMAL_TOL
            || bottom[2].abs() > ORTHONORMAL_TOL
            || (bottom[3] - 1.0).abs() > ORTHONORMAL_TOL
        {
            return Err(GeomError::NotARotation(
                "bottom row of homogeneous matrix is not [0 0 0 1]".into(),
            ));
        }
        let rotation = Matrix3::new(
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        );
        Self::new(rotation, Vec3::new(m[0][3], m[1][3], m[2][3]))
    }
}

impl Serialize for RigidTransform {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_matrix4().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RigidTransform {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let m = <[[f64; 4]; 4]>::deserialize(deserializer)?;
        RigidTransform::from_matrix4(&m).map_err(serde::de::Error::custom)
    }
}

fn check_rotation(r: &Matrix3<f64>) -> Result<(), GeomError> {
    if !r.iter().all(|c| c.is_finite()) {
        return Err(GeomError::NotARotation("non-finite entries".into()));
    }
    let err = (r.transpose() * r - Matrix3::identity()).abs().max();
    if err > ORTHONORMAL_TOL {
        return Err(GeomError::NotARotation(format!(
            "RᵀR deviates from identity by {err:e}"
        )));
    }
    let det = r.determinant();
    if (det - 1.0).abs() > ORTHONORMAL_TOL {
        return Err(GeomError::NotARotation(format!("determinant {det}")));
    }
    Ok(())
}

/// Applies `transform` to every point.
pub fn transform_points(transform: &RigidTransform, points: &[Vec3]) -> Vec<Vec3> {
    points.iter().map(|p| transform.apply(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn identity_leaves_points_unchanged() {
        let pts = vec![Vec3::new(1.0, -2.0, 0.5), Vec3::new(0.0, 0.0, 0.0)];
        assert_eq!(transform_points(&RigidTransform::identity(), &pts), pts);
    }

    #[test]
    fn pure_translation_moves_origin() {
        let t = RigidTransform::from_translation(Vec3::new(0.1, 0.0, 0.0));
        assert_eq!(t.apply(&Vec3::zeros()), Vec3::new(0.1, 0.0, 0.0));
    }

    #[test]
    fn compose_and_inverse() {
        let a = RigidTransform::rot_z(0.3).compose(&RigidTransform::from_translation(Vec3::new(
            1.0, 2.0, 3.0,
        )));
        let b = RigidTransform::from_axis_angle(&Vec3::new(1.0, 1.0, 0.0), 0.7);
        let p = Vec3::new(0.2, -0.4, 0.9);
        assert!((a.compose(&b).apply(&p) - a.apply(&b.apply(&p))).norm() < 1e-12);
        assert!((a.inverse().apply(&a.apply(&p)) - p).norm() < 1e-12);
    }

    #[test]
    fn rejects_reflection() {
        let r = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(matches!(
            RigidTransform::new(r, Vec3::zeros()),
            Err(GeomError::NotARotation(_))
        ));
    }

    #[test]
    fn matrix4_round_trip() {
        let t = RigidTransform::rot_z(FRAC_PI_2)
            .compose(&RigidTransform::from_translation(Vec3::new(0.5, 0.0, -1.0)));
        let back = RigidTransform::from_matrix4(&t.to_matrix4()).unwrap();
        assert_eq!(back, t);
        let json = serde_json::to_string(&t).unwrap();
        let parsed: RigidTransform = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, t);
    }
}
