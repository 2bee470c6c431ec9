//! Bringing in-the-wild demonstrations into the robot base frame, anchored
//! on the single in-scene demonstration.
//!
//! The translation comes from the first-frame object centroids, the rotation
//! from registering the first-frame hands and keeping only the part about
//! gravity (+z).

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::demos::{FrameOfReference, HandPose, ObjectPoints, Source, Trajectory};
use crate::geom3d::{extract_z_rotation, kabsch, GeomError, RigidTransform, Vec3};

#[derive(Debug, thiserror::Error)]
pub enum AlignError {
    #[error("NMismatch: scene has {scene} object points, wild trajectory has {wild}")]
    NMismatch { scene: usize, wild: usize },
    #[error("WrongSource: {0}")]
    WrongSource(String),
    #[error("EmptyTrajectory: {0}")]
    EmptyTrajectory(&'static str),
    #[error(transparent)]
    Geometry(#[from] GeomError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignMode {
    /// `Ô = R_z·O + ΔO`, rotating about the world origin.
    Literal,
    /// `Ô = R_z·(O − c_w) + c_s`, rotating about the wild first-frame
    /// centroid so the first-frame centroids coincide.
    #[default]
    Pivoted,
}

impl FromStr for AlignMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "literal" => Ok(Self::Literal),
            "pivoted" => Ok(Self::Pivoted),
            other => Err(format!("unknown alignment mode {other:?} (pivoted|literal)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    pub delta_o: Vec3,
    pub theta_z: f64,
    pub mode: AlignMode,
    /// The map applied to every point of the wild trajectory.
    pub transform: RigidTransform,
    pub aligned: Trajectory,
}

/// `centroid(scene_first) − centroid(wild_first)`.
pub fn centroid_offset(scene_first: &ObjectPoints, wild_first: &ObjectPoints) -> Vec3 {
    scene_first.centroid() - wild_first.centroid()
}

/// Rotation about +z that best maps the wild hand onto the scene hand:
/// Kabsch from `wild_hand0` to `scene_hand0`, reduced to its z component.
pub fn hand_yaw(scene_hand0: &HandPose, wild_hand0: &HandPose) -> Result<(f64, RigidTransform), GeomError> {
    let t = kabsch(&wild_hand0.fingertips, &scene_hand0.fingertips)?;
    extract_z_rotation(&t)
}

/// Maps `wild` into the frame of `scene`. The result keeps its in-the-wild
/// source tag and is marked as robot-base.
pub fn align_trajectory(wild: &Trajectory, scene: &Trajectory, mode: AlignMode) -> Result<AlignmentResult, AlignError> {
    if wild.source != Source::InTheWild {
        return Err(AlignError::WrongSource("wild trajectory is not tagged in_the_wild".into()));
    }
    if scene.source != Source::InScene {
        return Err(AlignError::WrongSource("scene trajectory is not tagged in_scene".into()));
    }
    let (Some(w0), Some(s0)) = (wild.frames.first(), scene.frames.first()) else {
        return Err(AlignError::EmptyTrajectory("alignment needs a first frame on both sides"));
    };
    let (n_s, n_w) = (s0.objects.len(), w0.objects.len());
    if n_s != n_w || n_s == 0 {
        return Err(AlignError::NMismatch { scene: n_s, wild: n_w });
    }
    let delta_o = centroid_offset(&s0.objects, &w0.objects);
    let (theta_z, rz) = hand_yaw(&s0.hand, &w0.hand)?;
    let transform = match mode {
        AlignMode::Literal => RigidTransform::from_translation(delta_o).compose(&rz),
        AlignMode::Pivoted => {
            let c_w = w0.objects.centroid();
            let c_s = s0.objects.centroid();
            RigidTransform::from_translation(c_s)
                .compose(&rz)
                .compose(&RigidTransform::from_translation(-c_w))
        }
    };
    let mut aligned = wild.transformed(&transform);
    aligned.frame_of_reference = FrameOfReference::RobotBase;
    Ok(AlignmentResult {
        delta_o,
        theta_z,
        mode,
        transform,
        aligned,
    })
}

/// Aligns every wild trajectory against the same scene.
pub fn align_all(wild: &[Trajectory], scene: &Trajectory, mode: AlignMode) -> Result<Vec<AlignmentResult>, AlignError> {
    wild.iter().map(|w| align_trajectory(w, scene, mode)).collect()
}

/// Ablation baseline: relabels a wild trajectory as robot-base without
/// moving any point.
pub fn assume_robot_frame(wild: &Trajectory) -> Trajectory {
    let mut t = wild.clone();
    t.frame_of_reference = FrameOfReference::RobotBase;
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demos::Frame;

    fn scene() -> Trajectory {
        let frames = (0..3)
            .map(|k| {
                let s = 0.01 * k as f64;
                Frame {
                    timestamp: 0.1 * k as f64,
                    objects: ObjectPoints(vec![
                        Vec3::new(0.5 + s, 0.0, 0.0),
                        Vec3::new(0.55, 0.05, 0.02),
                        Vec3::new(0.45, -0.03, 0.04),
                    ]),
                    hand: HandPose::new(std::array::from_fn(|i| {
                        Vec3::new(0.35 + 0.01 * i as f64 + s, 0.03 - 0.015 * i as f64, 0.2 - 0.01 * (i * i) as f64)
                    })),
                }
            })
            .collect();
        Trajectory::new(frames, Source::InScene, FrameOfReference::RobotBase, "t", vec![]).unwrap()
    }

    fn as_wild(t: &Trajectory, map: &RigidTransform) -> Trajectory {
        let mut w = t.transformed(map);
        w.source = Source::InTheWild;
        w.frame_of_reference = FrameOfReference::WorldGravityAligned;
        w
    }

    #[test]
    fn identical_wild_maps_to_itself() {
        let s = scene();
        let w = as_wild(&s, &RigidTransform::identity());
        for mode in [AlignMode::Literal, AlignMode::Pivoted] {
            let r = align_trajectory(&w, &s, mode).unwrap();
            assert!(r.theta_z.abs() < 1e-12);
            assert!(r.delta_o.norm() < 1e-15);
            for (a, b) in r.aligned.frames.iter().zip(&s.frames) {
                for (p, q) in a.objects.iter().zip(b.objects.iter()) {
                    assert!((p - q).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn yaw_sign_follows_wild_to_scene() {
        let s = scene();
        let w = as_wild(&s, &RigidTransform::rot_z(-std::f64::consts::FRAC_PI_2));
        let (theta, _) = hand_yaw(&s.frames[0].hand, &w.frames[0].hand).unwrap();
        assert!((theta - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn point_count_mismatch_rejected() {
        let s = scene();
        let mut w = as_wild(&s, &RigidTransform::identity());
        for f in &mut w.frames {
            f.objects.pop();
        }
        assert!(matches!(
            align_trajectory(&w, &s, AlignMode::Pivoted),
            Err(AlignError::NMismatch { scene: 3, wild: 2 })
        ));
    }
}
