//! Pure 3D geometry: rigid transforms, pinhole and stereo cameras, and
//! least-squares rigid registration.
//!
//! Everything here is a pure function of its inputs; all computation is in
//! `f64`.

mod camera;
mod registration;
mod transform;

pub use camera::{
    disparity_to_depth, disparity_to_depth_with_epsilon, triangulate, unproject, PinholeCamera,
    StereoRig, DEFAULT_DISPARITY_EPSILON,
};
pub use registration::{extract_z_rotation, kabsch};
pub use transform::{transform_points, RigidTransform};

/// A point or direction in meters.
pub type Vec3 = nalgebra::Vector3<f64>;

/// Errors raised by geometric operations.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeomError {
    #[error("DegenerateDisparity: disparity {disparity} px is at or below {epsilon} px")]
    DegenerateDisparity { disparity: f64, epsilon: f64 },
    #[error("NonPositiveDepth: depth {0} m")]
    NonPositiveDepth(f64),
    #[error("DegenerateConfiguration: {0}")]
    DegenerateConfiguration(String),
    #[error("ParallelRays: back-projected rays have no usable parallax")]
    ParallelRays,
    #[error("InvalidCamera: {0}")]
    InvalidCamera(String),
    #[error("NotARotation: {0}")]
    NotARotation(String),
    #[error("PointBehindCamera: camera-frame depth {0} m")]
    PointBehindCamera(f64),
}

/// True when every component is finite.
pub fn is_finite(v: &Vec3) -> bool {
    v.iter().all(|c| c.is_finite())
}

/// Arithmetic mean of a non-empty point set. Returns the origin for an
/// empty slice.
pub fn centroid(points: &[Vec3]) -> Vec3 {
    if points.is_empty() {
        return Vec3::zeros();
    }
    let sum = points.iter().fold(Vec3::zeros(), |acc, p| acc + p);
    sum / points.len() as f64
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    use std::f64::consts::PI;
    let mut a = theta.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}
