use ndarray::{Array3, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{ScalePivot, TrainingSample};
use crate::demos::FINGERTIPS;
use crate::geom3d::Vec3;

pub const TRANSLATION_RANGE: f64 = 0.30;
pub const SCALE_RANGE: (f64, f64) = (0.8, 1.2);
pub const YAW_RANGE: f64 = std::f64::consts::FRAC_PI_3;
pub const FINGERTIP_NOISE_STD: f64 = 0.01;
pub const FINGERTIP_NOISE_CLIP: f64 = 0.02;

/// One draw of the training-time similarity transform and input noise.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationSample {
    pub translation: Vec3,
    pub scale: f64,
    pub yaw: f64,
    /// `T_o × 5 × 3`, added to the input fingertips only.
    pub fingertip_noise: Array3<f64>,
}

impl AugmentationSample {
    /// The draw that leaves a sample unchanged.
    pub fn identity(t_o: usize) -> Self {
        Self {
            translation: Vec3::zeros(),
            scale: 1.0,
            yaw: 0.0,
            fingertip_noise: Array3::zeros((t_o, FINGERTIPS, 3)),
        }
    }

    pub fn draw(rng: &mut impl Rng, t_o: usize) -> Self {
        let r = TRANSLATION_RANGE;
        let translation = Vec3::new(
            rng.random_range(-r..=r),
            rng.random_range(-r..=r),
            rng.random_range(-r..=r),
        );
        let scale = rng.random_range(SCALE_RANGE.0..=SCALE_RANGE.1);
        let yaw = rng.random_range(-YAW_RANGE..=YAW_RANGE);
        let fingertip_noise = Array3::from_shape_simple_fn((t_o, FINGERTIPS, 3), || {
            let n: f64 = rng.sample(StandardNormal);
            (n * FINGERTIP_NOISE_STD).clamp(-FINGERTIP_NOISE_CLIP, FINGERTIP_NOISE_CLIP)
        });
        Self {
            translation,
            scale,
            yaw,
            fingertip_noise,
        }
    }
}

/// Applies `p → c + t + s·R_z(yaw)·(p − c)` to every point of the sample
/// (`c` is the origin or the input-object centroid), then adds the noise to
/// the input fingertips.
pub fn apply_augmentation(sample: &TrainingSample, aug: &AugmentationSample, pivot: ScalePivot) -> TrainingSample {
    let c = match pivot {
        ScalePivot::Origin => Vec3::zeros(),
        ScalePivot::Centroid => {
            let n = (sample.input_objects.len() / 3).max(1) as f64;
            let sum = sample.input_objects.sum_axis(Axis(0)).sum_axis(Axis(0));
            Vec3::new(sum[0], sum[1], sum[2]) / n
        }
    };
    let (sn, cs) = aug.yaw.sin_cos();
    let map = |a: &Array3<f64>| {
        let mut out = a.clone();
        for mut lane in out.lanes_mut(Axis(2)) {
            let p = Vec3::new(lane[0], lane[1], lane[2]) - c;
            let q = Vec3::new(cs * p.x - sn * p.y, sn * p.x + cs * p.y, p.z) * aug.scale + c + aug.translation;
            lane[0] = q.x;
            lane[1] = q.y;
            lane[2] = q.z;
        }
        out
    };
    let mut input_fingertips = map(&sample.input_fingertips);
    input_fingertips += &aug.fingertip_noise;
    TrainingSample {
        input_objects: map(&sample.input_objects),
        input_fingertips,
        target_fingertips: map(&sample.target_fingertips),
    }
}

/// Draws a fresh augmentation and applies it.
pub fn augment(sample: &TrainingSample, rng: &mut impl Rng, pivot: ScalePivot) -> TrainingSample {
    let aug = AugmentationSample::draw(rng, sample.input_fingertips.len_of(Axis(0)));
    apply_augmentation(sample, &aug, pivot)
}
