use serde::{Deserialize, Serialize};

use crate::demos::{HandPose, FINGERTIPS, GRASP_DISTANCE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraspOptions {
    /// A finger strictly closer than this to the thumb triggers tightening.
    pub threshold: f64,
    /// Fraction of the thumb-finger gap each side travels.
    pub pull: f64,
}

impl Default for GraspOptions {
    fn default() -> Self {
        Self {
            threshold: GRASP_DISTANCE,
            pull: 0.4,
        }
    }
}

/// Tightens a predicted grasp with the default 5 cm threshold and 40% pull.
pub fn grasp_adjust(pose: &HandPose) -> HandPose {
    grasp_adjust_with(pose, &GraspOptions::default())
}

/// Every finger closer than `threshold` to the thumb moves `pull` of the gap
/// toward the thumb; the thumb moves `pull` of its gap toward the nearest
/// such finger. A single 4 cm pair thus ends 0.8 cm apart. Fingers at or
/// beyond the threshold are left untouched.
pub fn grasp_adjust_with(pose: &HandPose, opts: &GraspOptions) -> HandPose {
    let thumb = pose.thumb();
    let mut out = *pose;
    let mut nearest: Option<(f64, usize)> = None;
    for f in 1..FINGERTIPS {
        let tip = pose.fingertips[f];
        let d = (tip - thumb).norm();
        if d < opts.threshold {
            out.fingertips[f] = tip + (thumb - tip) * opts.pull;
            if nearest.is_none_or(|(best, _)| d < best) {
                nearest = Some((d, f));
            }
        }
    }
    if let Some((_, f)) = nearest {
        out.fingertips[0] = thumb + (pose.fingertips[f] - thumb) * opts.pull;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom3d::Vec3;

    fn hand_with_index_gap(gap: f64) -> HandPose {
        HandPose::new([
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(gap, 0.0, 0.0),
            Vec3::new(0.0, 0.08, 0.0),
            Vec3::new(0.0, 0.1, 0.0),
            Vec3::new(0.0, 0.12, 0.0),
        ])
    }

    #[test]
    fn four_centimetres_closes_to_eight_millimetres() {
        let out = grasp_adjust(&hand_with_index_gap(0.04));
        let d = (out.fingertips[1] - out.fingertips[0]).norm();
        assert!((d - 0.008).abs() < 1e-12);
        assert_eq!(out.fingertips[2..], hand_with_index_gap(0.04).fingertips[2..]);
    }

    #[test]
    fn open_hand_untouched() {
        let h = hand_with_index_gap(0.06);
        assert_eq!(grasp_adjust(&h), h);
    }
}
