use nalgebra::{Matrix3, SVD};

use super::{centroid, wrap_angle, GeomError, RigidTransform, Vec3};

const RANK_TOL: f64 = 1e-12;
const Z_AXIS_TOL: f64 = 1e-12;

/// Least-squares rigid transform taking `source` onto `target`
/// (minimises `Σ‖R·pᵢ + t − qᵢ‖²`).
///
/// Rows correspond pairwise. The cross-covariance SVD is sign-corrected so
/// the result is always a proper rotation, even when `target` is a mirror
/// image of `source`.
pub fn kabsch(source: &[Vec3], target: &[Vec3]) -> Result<RigidTransform, GeomError> {
    if source.len() != target.len() {
        return Err(GeomError::DegenerateConfiguration(format!(
            "point counts differ: {} vs {}",
            source.len(),
            target.len()
        )));
    }
    if source.len() < 3 {
        return Err(GeomError::DegenerateConfiguration(format!(
            "need at least 3 correspondences, got {}",
            source.len()
        )));
    }
    let cs = centroid(source);
    let ct = centroid(target);

    let mut cov = Matrix3::zeros();
    let mut scatter = Matrix3::zeros();
    for (p, q) in source.iter().zip(target) {
        let a = p - cs;
        let b = q - ct;
        cov += a * b.transpose();
        scatter += a * a.transpose();
    }

    // Rank of the centred source cloud: its scatter eigenvalues are the
    // squared singular values of the centred points.
    let mut spread = scatter.symmetric_eigenvalues();
    spread
        .as_mut_slice()
        .sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    if !(spread[0] > 0.0) || spread[1] <= RANK_TOL * spread[0].max(RANK_TOL) {
        return Err(GeomError::DegenerateConfiguration(
            "source points are collinear or coincident".into(),
        ));
    }

    let svd = SVD::new(cov, true, true);
    let u = svd.u.ok_or_else(|| GeomError::DegenerateConfiguration("SVD failed".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| GeomError::DegenerateConfiguration("SVD failed".into()))?;
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let correction = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d));
    let rotation = v * correction * u.transpose();
    let translation = ct - rotation * cs;
    Ok(RigidTransform::from_parts_unchecked(rotation, translation))
}

/// Rotation about +z closest to `transform`'s rotation in Frobenius norm.
///
/// Returns the angle in `(-π, π]` and the corresponding pure z-rotation
/// (zero translation).
pub fn extract_z_rotation(transform: &RigidTransform) -> Result<(f64, RigidTransform), GeomError> {
    let r = transform.rotation();
    let y = r[(1, 0)] - r[(0, 1)];
    let x = r[(0, 0)] + r[(1, 1)];
    if y.abs() < Z_AXIS_TOL && x.abs() < Z_AXIS_TOL {
        return Err(GeomError::DegenerateConfiguration(
            "rotation has no well-defined component about z".into(),
        ));
    }
    let theta = wrap_angle(y.atan2(x));
    Ok((theta, RigidTransform::rot_z(theta)))
}
