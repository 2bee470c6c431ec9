use approx::assert_relative_eq;
use nalgebra::{Matrix3, UnitQuaternion, Vector4};
use ndarray::{s, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::demos::{Frame, FrameOfReference, HandPose, ObjectPoints, Source, Trajectory};
use crate::geom3d::Vec3;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    let q = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    UnitQuaternion::from_quaternion(nalgebra::Quaternion::from(q)).to_rotation_matrix().into_inner()
}

fn random_array2(rng: &mut impl Rng, r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((r, c), || rng.sample::<f64, _>(StandardNormal))
}

fn tiny_config() -> PolicyConfig {
    PolicyConfig {
        T_o: 3,
        T_p: 2,
        N: 4,
        vn_channels: vec![4],
        token_dim: 8,
        transformer: TransformerConfig {
            layers: 1,
            heads: 1,
            feedforward_dim: Some(4),
        },
        head_hidden: vec![4],
        epochs: 200,
        batch_size: 8,
        learning_rate: 1e-2,
        seed: 3,
        augment: false,
        ..PolicyConfig::default()
    }
}

fn random_sample(rng: &mut impl Rng, c: &PolicyConfig) -> TrainingSample {
    let mut f = |shape: (usize, usize, usize), offset: f64| {
        Array3::from_shape_simple_fn(shape, || offset + 0.2 * rng.sample::<f64, _>(StandardNormal))
    };
    TrainingSample {
        input_objects: f((c.T_o, c.N, 3), 0.3),
        input_fingertips: f((c.T_o, 5, 3), 0.4),
        target_fingertips: f((c.T_p, 5, 3), 0.4),
    }
}

fn rel_err(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let num = (a - b).iter().map(|v| v * v).sum::<f64>().sqrt();
    let den = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    num / den
}

#[test]
fn vn_layers_are_equivariant() {
    let mut r = rng(1);
    let w = random_array2(&mut r, 6, 4);
    let act = VnActivation {
        w_q: random_array2(&mut r, 6, 6),
        w_k: random_array2(&mut r, 6, 6),
    };
    for _ in 0..50 {
        let v = VNFeature::new(random_array2(&mut r, 4, 3)).unwrap();
        let rot = random_rotation(&mut r);
        let a = vn_linear(&w, &v.rotated(&rot)).unwrap();
        let b = vn_linear(&w, &v).unwrap().rotated(&rot);
        assert!(rel_err(&a.channels, &b.channels) < 1e-12);
        let a = vn_activation(&a, &act).unwrap();
        let b = vn_activation(&b, &act).unwrap();
        assert!(rel_err(&a.channels, &b.channels) < 1e-12);
    }
}

#[test]
fn vn_stack_is_equivariant_and_zero_history_gives_bias() {
    let model = PolicyModel::new(&PolicyConfig::desk()).unwrap();
    let mut r = rng(2);
    let h = random_array2(&mut r, 10, 3);
    let rot = random_rotation(&mut r);
    let rotated = VNFeature::new(h.clone()).unwrap().rotated(&rot).channels;
    let a = model.vn_stack(rotated.view()).unwrap();
    let b = model.vn_stack(h.view()).unwrap().rotated(&rot);
    assert!(rel_err(&a.channels, &b.channels) < 1e-12);

    let tok = model.encode_point_history(Array2::zeros((10, 3)).view()).unwrap();
    let bias = model.params().by_name("token.b").unwrap();
    assert_eq!(tok.as_slice().unwrap(), bias.as_slice().unwrap());
    assert!(model.encode_point_history(Array2::zeros((9, 3)).view()).is_err());
}

#[test]
fn prediction_ignores_object_order() {
    let c = PolicyConfig::desk();
    let model = PolicyModel::new(&c).unwrap();
    let mut r = rng(4);
    let s = random_sample(&mut r, &c);
    let p = model.predict(s.input_fingertips.view(), s.input_objects.view()).unwrap();
    assert_eq!(p.dim(), (c.T_p, 5, 3));
    assert!(p.iter().all(|v| v.is_finite()));
    let again = model.predict(s.input_fingertips.view(), s.input_objects.view()).unwrap();
    assert_eq!(p, again);

    let mut perm: Vec<usize> = (0..c.N).collect();
    perm.reverse();
    perm.swap(3, 17);
    let mut objects = s.input_objects.clone();
    for (dst, &src) in perm.iter().enumerate() {
        objects.slice_mut(s![.., dst, ..]).assign(&s.input_objects.slice(s![.., src, ..]));
    }
    let q = model.predict(s.input_fingertips.view(), objects.view()).unwrap();
    for (a, b) in p.iter().zip(q.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(model.predict(s.input_fingertips.view(), objects.slice(s![.., ..4, ..])).is_err());
}

#[test]
fn gradients_match_finite_differences() {
    let c = tiny_config();
    let mut model = PolicyModel::new(&c).unwrap();
    assert!(model.params().scalar_count() < 700);
    let mut r = rng(5);
    let batch: Vec<TrainingSample> = (0..3).map(|_| random_sample(&mut r, &c)).collect();
    let (_, grads) = gradients(&model, &batch).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for t in 0..model.params().len() {
        for idx in 0..model.params().get(t).len() {
            let orig = model.params().get(t).as_slice().unwrap()[idx];
            model.params_mut().get_mut(t).as_slice_mut().unwrap()[idx] = orig + h;
            let (lp, _) = gradients(&model, &batch).unwrap();
            model.params_mut().get_mut(t).as_slice_mut().unwrap()[idx] = orig - h;
            let (lm, _) = gradients(&model, &batch).unwrap();
            model.params_mut().get_mut(t).as_slice_mut().unwrap()[idx] = orig;
            let num = (lp - lm) / (2.0 * h);
            let ana = grads.get(t).as_slice().unwrap()[idx];
            let rel = (num - ana).abs() / num.abs().max(ana.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn loss_is_mean_of_squares() {
    let mut r = rng(6);
    let a = Array3::from_shape_simple_fn((3, 5, 3), || r.random::<f64>());
    let b = Array3::from_shape_simple_fn((3, 5, 3), || r.random::<f64>());
    let mut sum = 0.0;
    for t in 0..3 {
        for i in 0..5 {
            for x in 0..3 {
                sum += (a[(t, i, x)] - b[(t, i, x)]).powi(2);
            }
        }
    }
    assert_relative_eq!(mse_loss(a.view(), b.view()).unwrap(), sum / 45.0, max_relative = 1e-12);
}

#[test]
fn augmentation_is_a_similarity_with_input_noise_only() {
    let c = PolicyConfig::desk();
    let mut r = rng(7);
    let s0 = random_sample(&mut r, &c);
    assert_eq!(apply_augmentation(&s0, &AugmentationSample::identity(c.T_o), ScalePivot::Origin), s0);

    let a = AugmentationSample::draw(&mut r, c.T_o);
    assert!(a.translation.iter().all(|t| t.abs() <= TRANSLATION_RANGE));
    assert!((SCALE_RANGE.0..=SCALE_RANGE.1).contains(&a.scale));
    assert!(a.yaw.abs() <= YAW_RANGE);
    assert!(a.fingertip_noise.iter().all(|n| n.abs() <= FINGERTIP_NOISE_CLIP));
    let out = apply_augmentation(&s0, &a, ScalePivot::Origin);
    let p = |arr: &Array3<f64>, t: usize, j: usize| Vec3::new(arr[(t, j, 0)], arr[(t, j, 1)], arr[(t, j, 2)]);
    for j in 1..c.N {
        let d0 = (p(&s0.input_objects, 2, j) - p(&s0.input_objects, 2, 0)).norm();
        let d1 = (p(&out.input_objects, 2, j) - p(&out.input_objects, 2, 0)).norm();
        assert_relative_eq!(d1, a.scale * d0, max_relative = 1e-12);
    }

    let mut b = a.clone();
    b.fingertip_noise = AugmentationSample::draw(&mut r, c.T_o).fingertip_noise;
    let out_b = apply_augmentation(&s0, &b, ScalePivot::Centroid);
    let out_a = apply_augmentation(&s0, &a, ScalePivot::Centroid);
    assert_eq!(out_a.target_fingertips, out_b.target_fingertips);
    assert_ne!(out_a.input_fingertips, out_b.input_fingertips);
}

fn line_trajectory(len: usize, n: usize) -> Trajectory {
    let frames = (0..len)
        .map(|k| {
            let s = k as f64 / len as f64;
            Frame {
                timestamp: 0.1 * k as f64,
                objects: ObjectPoints((0..n).map(|j| Vec3::new(0.5 + 0.01 * j as f64, 0.02 * (j % 3) as f64, 0.0)).collect()),
                hand: HandPose::new(std::array::from_fn(|i| {
                    Vec3::new(0.3 + 0.2 * s + 0.01 * i as f64, -0.03 + 0.015 * i as f64, 0.25 - 0.1 * s)
                })),
            }
        })
        .collect();
    Trajectory::new(frames, Source::InScene, FrameOfReference::RobotBase, "reach", vec![]).unwrap()
}

#[test]
fn windows_pad_both_ends() {
    let t = line_trajectory(4, 2);
    let w = windows(&t, 3, 2);
    assert_eq!(w.len(), 3);
    // history of window 0 repeats frame 0
    assert_eq!(w[0].input_fingertips.slice(s![0, .., ..]), w[0].input_fingertips.slice(s![2, .., ..]));
    // targets of the last window repeat the final frame
    assert_eq!(w[2].target_fingertips.slice(s![0, .., ..]), w[2].target_fingertips.slice(s![1, .., ..]));
    assert_eq!(w[2].target_fingertips[(0, 0, 0)], t.frames[3].hand.fingertips[0].x);
}

#[test]
fn training_rejects_unaligned_and_empty() {
    let c = tiny_config();
    assert!(matches!(train(&[], &c), Err(PolicyError::EmptyDataset)));
    let mut t = line_trajectory(6, 4);
    t.frame_of_reference = FrameOfReference::WorldGravityAligned;
    assert!(matches!(train(&[t], &c), Err(PolicyError::NonAlignedInput(_))));
}

#[test]
fn overfits_one_trajectory_and_is_deterministic() {
    let c = tiny_config();
    let t = line_trajectory(12, 4);
    let (model, log) = train(std::slice::from_ref(&t), &c).unwrap();
    assert_eq!(log.epoch_loss.len(), 200);
    let last = *log.epoch_loss.last().unwrap();
    assert!(last < 0.01 * log.epoch_loss[0], "{} -> {}", log.epoch_loss[0], last);

    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let (model2, log2) = pool.install(|| train(std::slice::from_ref(&t), &c)).unwrap();
    assert_eq!(log.epoch_loss, log2.epoch_loss);
    assert_eq!(encode_model(&model), encode_model(&model2));
    assert!(evaluate_mse(&model, &[t]).unwrap() < 0.01 * log.epoch_loss[0]);
}

#[test]
fn augmented_training_is_deterministic() {
    let c = PolicyConfig {
        epochs: 3,
        augment: true,
        ..tiny_config()
    };
    let t = line_trajectory(40, 4);
    let (_, a) = train(std::slice::from_ref(&t), &c).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let (_, b) = pool.install(|| train(std::slice::from_ref(&t), &c)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn model_file_round_trip_and_corruption() {
    let model = PolicyModel::new(&PolicyConfig::desk()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ainm");
    save_model(&model, &path).unwrap();
    let back = load_model(&path).unwrap();
    let mut r = rng(8);
    let s = random_sample(&mut r, model.config());
    assert_eq!(
        model.predict(s.input_fingertips.view(), s.input_objects.view()).unwrap(),
        back.predict(s.input_fingertips.view(), s.input_objects.view()).unwrap()
    );

    let bytes = encode_model(&model);
    let mut v = bytes.clone();
    v[4] = 9;
    assert!(matches!(decode_model(&v), Err(PolicyError::VersionMismatch { found: 9, expected: 1 })));
    let mut v = bytes.clone();
    let mid = v.len() / 2;
    v[mid] ^= 0x40;
    assert!(matches!(decode_model(&v), Err(PolicyError::ChecksumMismatch)));
    assert!(matches!(decode_model(b"NOPE...."), Err(PolicyError::BadMagic)));
    assert!(matches!(decode_model(&bytes[..5]), Err(PolicyError::TruncatedFile)));
}

#[test]
fn loss_scaling_scales_gradients() {
    let c = tiny_config();
    let model = PolicyModel::new(&c).unwrap();
    let mut r = rng(9);
    let batch: Vec<TrainingSample> = (0..2).map(|_| random_sample(&mut r, &c)).collect();
    let doubled: Vec<TrainingSample> = batch.iter().chain(batch.iter()).cloned().collect();
    let (l1, g1) = gradients(&model, &batch).unwrap();
    let (l2, g2) = gradients(&model, &doubled).unwrap();
    assert_relative_eq!(l1, l2, max_relative = 1e-12);
    for (a, b) in g1.values().iter().zip(g2.values()) {
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }
}
