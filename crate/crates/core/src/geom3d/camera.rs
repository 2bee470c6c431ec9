use serde::{Deserialize, Serialize};

use super::{GeomError, RigidTransform, Vec3};

/// Disparities at or below this many pixels are rejected.
pub const DEFAULT_DISPARITY_EPSILON: f64 = 1e-6;

const PARALLEL_TOL: f64 = 1e-9;

/// An undistorted pinhole camera. `pose` maps camera coordinates into the
/// reference frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinholeCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub pose: RigidTransform,
}

impl PinholeCamera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, pose: RigidTransform) -> Result<Self, GeomError> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            pose,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(GeomError::InvalidCamera(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(GeomError::InvalidCamera("non-finite principal point".into()));
        }
        Ok(())
    }

    /// Projects a camera-frame point to pixels.
    pub fn project_camera(&self, p: &Vec3) -> Result<(f64, f64), GeomError> {
        if p.z <= 0.0 {
            return Err(GeomError::PointBehindCamera(p.z));
        }
        Ok((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Projects a reference-frame point to pixels.
    pub fn project(&self, p: &Vec3) -> Result<(f64, f64), GeomError> {
        self.project_camera(&self.pose.inverse().apply(p))
    }

    /// Unit-depth ray direction through `pixel`, in the camera frame.
    pub fn ray_camera(&self, pixel: (f64, f64)) -> Vec3 {
        Vec3::new(
            (pixel.0 - self.cx) / self.fx,
            (pixel.1 - self.cy) / self.fy,
            1.0,
        )
    }
}

/// Lifts a pixel with known depth into the camera frame.
pub fn unproject(camera: &PinholeCamera, pixel: (f64, f64), depth: f64) -> Result<Vec3, GeomError> {
    if !(depth > 0.0) {
        return Err(GeomError::NonPositiveDepth(depth));
    }
    Ok(camera.ray_camera(pixel) * depth)
}

/// `Z = f·B/d` with the default disparity guard.
pub fn disparity_to_depth(focal: f64, baseline: f64, disparity: f64) -> Result<f64, GeomError> {
    disparity_to_depth_with_epsilon(focal, baseline, disparity, DEFAULT_DISPARITY_EPSILON)
}

pub fn disparity_to_depth_with_epsilon(
    focal: f64,
    baseline: f64,
    disparity: f64,
    epsilon: f64,
) -> Result<f64, GeomError> {
    if !(focal > 0.0) {
        return Err(GeomError::InvalidCamera(format!("focal length {focal}")));
    }
    if !(baseline > 0.0) {
        return Err(GeomError::InvalidCamera(format!("baseline {baseline}")));
    }
    if !(disparity > epsilon) {
        return Err(GeomError::DegenerateDisparity { disparity, epsilon });
    }
    Ok(focal * baseline / disparity)
}

/// A rectified stereo pair. Depth is expressed relative to the left camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StereoRig {
    pub left: PinholeCamera,
    pub right: PinholeCamera,
    pub baseline: f64,
}

impl StereoRig {
    /// Builds a rig whose right camera sits `baseline` meters along the left
    /// camera's +x axis.
    pub fn rectified(left: PinholeCamera, baseline: f64) -> Result<Self, GeomError> {
        let offset = RigidTransform::from_translation(Vec3::new(baseline, 0.0, 0.0));
        let right = PinholeCamera {
            pose: left.pose.compose(&offset),
            ..left
        };
        Self::new(left, right, baseline)
    }

    pub fn new(left: PinholeCamera, right: PinholeCamera, baseline: f64) -> Result<Self, GeomError> {
        left.validate()?;
        right.validate()?;
        if !(baseline > 0.0) || !baseline.is_finite() {
            return Err(GeomError::InvalidCamera(format!("baseline {baseline}")));
        }
        if left.fx != right.fx || left.fy != right.fy || left.cy != right.cy {
            return Err(GeomError::InvalidCamera(
                "stereo pair is not rectified (fx, fy, cy differ)".into(),
            ));
        }
        Ok(Self {
            left,
            right,
            baseline,
        })
    }

    /// Disparity a left-camera-frame point at depth `z` produces.
    pub fn disparity_at_depth(&self, z: f64) -> Result<f64, GeomError> {
        if !(z > 0.0) {
            return Err(GeomError::NonPositiveDepth(z));
        }
        Ok(self.left.fx * self.baseline / z)
    }

    pub fn depth_from_disparity(&self, disparity: f64) -> Result<f64, GeomError> {
        disparity_to_depth(self.left.fx, self.baseline, disparity)
    }
}

/// Midpoint of the common perpendicular between the two back-projected
/// rays, in the reference frame. Coincident camera centres and parallel
/// rays both yield [`GeomError::ParallelRays`].
pub fn triangulate(
    cam_a: &PinholeCamera,
    cam_b: &PinholeCamera,
    pix_a: (f64, f64),
    pix_b: (f64, f64),
) -> Result<Vec3, GeomError> {
    let oa = *cam_a.pose.translation();
    let ob = *cam_b.pose.translation();
    let da = cam_a.pose.apply_vector(&cam_a.ray_camera(pix_a)).normalize();
    let db = cam_b.pose.apply_vector(&cam_b.ray_camera(pix_b)).normalize();

    let baseline = (ob - oa).norm();
    let sin_angle = da.cross(&db).norm();
    if sin_angle < PARALLEL_TOL || baseline < PARALLEL_TOL {
        return Err(GeomError::ParallelRays);
    }

    // Minimise |oa + s·da − ob − t·db|² over (s, t).
    let w = oa - ob;
    let b = da.dot(&db);
    let d = da.dot(&w);
    let e = db.dot(&w);
    let denom = 1.0 - b * b;
    let s = (b * e - d) / denom;
    let t = (e - b * d) / denom;
    Ok(((oa + da * s) + (ob + db * t)) * 0.5)
}
