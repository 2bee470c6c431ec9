//! Acceptance suite: one PASS/FAIL line per criterion, run sequentially so
//! that runtime budgets are measured without interference.

use std::f64::consts::PI;
use std::io::Write;
use std::time::{Duration, Instant};

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector4};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use aina::align::{align_all, align_trajectory, assume_robot_frame, AlignMode};
use aina::demos::synth::OPEN_HAND;
use aina::demos::{synth_generate, FrameOfReference, HandPose, Source, SynthTaskSpec, TaskKind, Trajectory};
use aina::geom3d::{
    extract_z_rotation, kabsch, triangulate, unproject, wrap_angle, PinholeCamera, RigidTransform, StereoRig, Vec3,
};
use aina::kin::{grasp_adjust, ik, IkOptions, JointState, KinematicChain};
use aina::rollout::{evaluate, EvaluationReport, RolloutOptions, RolloutTaskSpec};
use aina::vnpolicy::{
    encode_model, gradients, train_with, vn_activation, vn_linear, PolicyConfig, PolicyModel, TrainingSample,
    TransformerConfig, VNFeature,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    let q = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    UnitQuaternion::from_quaternion(Quaternion::from(q)).to_rotation_matrix().into_inner()
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_array2(rng: &mut impl Rng, r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((r, c), || gaussian(rng))
}

fn rel_err(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let num = (a - b).iter().map(|v| v * v).sum::<f64>().sqrt();
    let den = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn equivariance() -> Verdict {
    let start = Instant::now();
    let mut r = rng(101);
    let mut worst: f64 = 0.0;
    let mut checks = 0;
    for config in [PolicyConfig::desk(), PolicyConfig::default()] {
        let model = PolicyModel::new(&config).unwrap();
        for l in 0..config.vn_channels.len() {
            let (w, act) = model.vn_layer(l);
            let c_in = w.ncols();
            let c_out = w.nrows();
            for _ in 0..1000 {
                let rot = random_rotation(&mut r);
                let v = VNFeature::new(random_array2(&mut r, c_in, 3)).unwrap();
                let a = vn_linear(w, &v.rotated(&rot)).unwrap();
                let b = vn_linear(w, &v).unwrap().rotated(&rot);
                worst = worst.max(rel_err(&a.channels, &b.channels));
                let u = VNFeature::new(random_array2(&mut r, c_out, 3)).unwrap();
                let a = vn_activation(&u.rotated(&rot), &act).unwrap();
                let b = vn_activation(&u, &act).unwrap().rotated(&rot);
                worst = worst.max(rel_err(&a.channels, &b.channels));
                checks += 2;
            }
        }
        for _ in 0..1000 {
            let rot = random_rotation(&mut r);
            let h = random_array2(&mut r, config.T_o, 3);
            let rotated = VNFeature::new(h.clone()).unwrap().rotated(&rot).channels;
            let a = model.vn_stack(rotated.view()).unwrap();
            let b = model.vn_stack(h.view()).unwrap().rotated(&rot);
            worst = worst.max(rel_err(&a.channels, &b.channels));
            checks += 1;
        }
    }
    let t = secs(start.elapsed());
    verdict(
        worst < 1e-9 && t < 10.0,
        format!("{checks} layer/rotation checks, max relative error {worst:.2e} (< 1e-9), {t:.2} s (< 10 s)"),
    )
}

fn downsized_config() -> PolicyConfig {
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
        seed: 11,
        ..PolicyConfig::default()
    }
}

fn gradient_check() -> Verdict {
    let start = Instant::now();
    let c = downsized_config();
    let mut model = PolicyModel::new(&c).unwrap();
    let mut r = rng(102);
    let mut arr = |shape: (usize, usize, usize), mean: f64| {
        Array3::from_shape_simple_fn(shape, || mean + 0.2 * gaussian(&mut r))
    };
    let batch: Vec<TrainingSample> = (0..4)
        .map(|_| TrainingSample {
            input_objects: arr((c.T_o, c.N, 3), 0.4),
            input_fingertips: arr((c.T_o, 5, 3), 0.3),
            target_fingertips: arr((c.T_p, 5, 3), 0.35),
        })
        .collect();
    let (_, grads) = gradients(&model, &batch).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut worst_group = String::new();
    for t in 0..model.params().len() {
        for idx in 0..model.params().get(t).len() {
            let orig = model.params().get(t).as_slice().unwrap()[idx];
            model.params_mut().get_mut(t).as_slice_mut().unwrap()[idx] = orig + h;
            let lp = gradients(&model, &batch).unwrap().0;
            model.params_mut().get_mut(t).as_slice_mut().unwrap()[idx] = orig - h;
            let lm = gradients(&model, &batch).unwrap().0;
            model.params_mut().get_mut(t).as_slice_mut().unwrap()[idx] = orig;
            let num = (lp - lm) / (2.0 * h);
            let ana = grads.get(t).as_slice().unwrap()[idx];
            let rel = (num - ana).abs() / num.abs().max(ana.abs()).max(1e-8);
            if rel > worst {
                worst = rel;
                worst_group = model.params().names()[t].clone();
            }
        }
    }
    let t = secs(start.elapsed());
    verdict(
        worst < 1e-4 && t < 60.0,
        format!(
            "{} parameters in {} groups, max relative error {worst:.2e} at {worst_group} (< 1e-4), {t:.2} s (< 60 s)",
            model.params().scalar_count(),
            model.params().len()
        ),
    )
}

fn registration() -> Verdict {
    let start = Instant::now();
    let mut r = rng(103);
    let mut worst_kabsch: f64 = 0.0;
    for _ in 0..1000 {
        let n = r.random_range(4..20);
        let src: Vec<Vec3> = (0..n).map(|_| Vec3::new(gaussian(&mut r), gaussian(&mut r), gaussian(&mut r))).collect();
        let truth = RigidTransform::new(
            random_rotation(&mut r),
            Vec3::new(gaussian(&mut r), gaussian(&mut r), gaussian(&mut r)),
        )
        .unwrap();
        let dst: Vec<Vec3> = src.iter().map(|p| truth.apply(p)).collect();
        let est = kabsch(&src, &dst).unwrap();
        let e = (est.rotation() - truth.rotation()).abs().max().max((est.translation() - truth.translation()).abs().max());
        worst_kabsch = worst_kabsch.max(e);
    }

    // Frobenius-distance oracle: 1e-4 rad grid, then golden-section refinement
    // inside the best grid cell.
    let frob = |rot: &Matrix3<f64>, theta: f64| (rot - RigidTransform::rot_z(theta).rotation()).norm_squared();
    let mut worst_z: f64 = 0.0;
    for _ in 0..100 {
        let yaw = r.random_range(-PI..PI);
        let tilt_axis = Vec3::new(gaussian(&mut r), gaussian(&mut r), 0.0);
        let tilt = RigidTransform::from_axis_angle(&tilt_axis, r.random_range(-0.6..0.6));
        let t = RigidTransform::rot_z(yaw).compose(&tilt).compose(&RigidTransform::from_axis_angle(
            &Vec3::new(gaussian(&mut r), gaussian(&mut r), gaussian(&mut r)),
            r.random_range(-0.2..0.2),
        ));
        let rot = *t.rotation();
        let step = 1e-4;
        let cells = (2.0 * PI / step).ceil() as usize;
        let (mut best, mut best_f) = (0.0, f64::INFINITY);
        for k in 0..cells {
            let th = -PI + k as f64 * step;
            let f = frob(&rot, th);
            if f < best_f {
                best_f = f;
                best = th;
            }
        }
        let (mut a, mut b) = (best - step, best + step);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        while b - a > 1e-12 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if frob(&rot, c) < frob(&rot, d) {
                b = d;
            } else {
                a = c;
            }
        }
        let oracle = 0.5 * (a + b);
        let (theta, _) = extract_z_rotation(&t).unwrap();
        worst_z = worst_z.max(wrap_angle(theta - oracle).abs());
    }
    let t = secs(start.elapsed());
    verdict(
        worst_kabsch < 1e-9 && worst_z < 1e-6 && t < 30.0,
        format!(
            "Kabsch max error {worst_kabsch:.2e} over 1000 transforms (< 1e-9); z-extraction max deviation from grid oracle {worst_z:.2e} rad over 100 rotations (< 1e-6); {t:.2} s (< 30 s)"
        ),
    )
}

fn alignment() -> Verdict {
    let spec = SynthTaskSpec::desk(TaskKind::PickPlace);
    let scene = synth_generate(&spec, 1, 104).unwrap().in_scene;
    let mut r = rng(104);
    let mut cases: Vec<(f64, f64)> = vec![(PI, 0.3), (-PI + 1e-9, -0.3), (PI - 1e-9, 0.3), (0.0, -0.3), (0.5, 0.0)];
    for _ in 0..45 {
        cases.push((r.random_range(-PI..=PI), r.random_range(-0.3..=0.3)));
    }
    let mut worst: f64 = 0.0;
    for (yaw, height) in &cases {
        let offset = Vec3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), *height);
        let map = RigidTransform::from_translation(offset).compose(&RigidTransform::rot_z(*yaw));
        let mut wild = scene.transformed(&map);
        wild.source = Source::InTheWild;
        wild.frame_of_reference = FrameOfReference::WorldGravityAligned;
        let res = align_trajectory(&wild, &scene, AlignMode::Pivoted).unwrap();
        for (a, b) in res.aligned.frames.iter().zip(&scene.frames) {
            for (p, q) in a.objects.iter().zip(b.objects.iter()) {
                worst = worst.max((p - q).norm());
            }
            for (p, q) in a.hand.fingertips.iter().zip(&b.hand.fingertips) {
                worst = worst.max((p - q).norm());
            }
        }
    }
    verdict(
        worst < 1e-6,
        format!(
            "{} rigid copies (yaw in [-π, π], height offsets up to ±0.3 m), max point error {worst:.2e} m over {} frames each (< 1e-6)",
            cases.len(),
            scene.len()
        ),
    )
}

fn geometry() -> Verdict {
    let left = PinholeCamera::new(800.0, 800.0, 320.0, 240.0, RigidTransform::identity()).unwrap();
    let mut r = rng(105);
    let rig = StereoRig::rectified(left, 0.1).unwrap();
    let mut worst_round: f64 = 0.0;
    for _ in 0..1000 {
        let p = Vec3::new(r.random_range(-0.4..0.4), r.random_range(-0.3..0.3), r.random_range(0.4..3.0));
        let (u, v) = rig.left.project(&p).unwrap();
        let (u2, _) = rig.right.project(&p).unwrap();
        let depth = rig.depth_from_disparity(u - u2).unwrap();
        let back = unproject(&rig.left, (u, v), depth).unwrap();
        worst_round = worst_round.max((back - p).norm());
    }

    let rig = StereoRig::rectified(left, 0.3).unwrap();
    let mut sq = 0.0;
    let n = 2000;
    for _ in 0..n {
        let p = Vec3::new(r.random_range(-0.2..0.2), r.random_range(-0.2..0.2), 1.0);
        let (u, v) = rig.left.project(&p).unwrap();
        let (u2, v2) = rig.right.project(&p).unwrap();
        let mut noisy = || 0.5 * gaussian(&mut r);
        let a = (u + noisy(), v + noisy());
        let b = (u2 + noisy(), v2 + noisy());
        let est = triangulate(&rig.left, &rig.right, a, b).unwrap();
        sq += (est - p).norm_squared();
    }
    let rms = (sq / n as f64).sqrt();
    verdict(
        worst_round < 1e-9 && rms < 5e-3,
        format!(
            "render→disparity→depth→unproject max error {worst_round:.2e} m (< 1e-9); triangulation RMS {:.2} mm at 1 m, 0.3 m baseline, σ = 0.5 px (< 5 mm)",
            rms * 1e3
        ),
    )
}

fn kinematics() -> Verdict {
    let chain = KinematicChain::reference();
    let opts = IkOptions::default();
    let mut r = rng(106);
    let mut worst: f64 = 0.0;
    let mut sum_sq = 0.0;
    let mut limits_ok = true;
    let mut monotone = true;
    for _ in 0..500 {
        let target_q = JointState(std::array::from_fn(|j| {
            let (lo, hi) = chain.limits(j);
            r.random_range(lo..hi)
        }));
        let target = chain.fk(&target_q);
        let start = chain.clamp(&JointState(std::array::from_fn(|j| target_q.0[j] + r.random_range(-0.1..0.1))));
        let (q, report) = ik(&chain, &target, &start, &opts);
        limits_ok &= chain.within_limits(&q);
        monotone &= report.residual_history.windows(2).all(|w| w[1] <= w[0]);
        let got = chain.fk(&q);
        let rms = (got
            .fingertips
            .iter()
            .zip(&target.fingertips)
            .map(|(a, b)| (a - b).norm_squared())
            .sum::<f64>()
            / 5.0)
            .sqrt();
        worst = worst.max(rms);
        sum_sq += rms * rms;
    }
    let overall = (sum_sq / 500.0).sqrt();
    verdict(
        worst < 1e-3 && limits_ok && monotone,
        format!(
            "500 FK-generated targets: worst per-target fingertip RMS {:.3} mm, overall {:.3} mm (< 1 mm); joints within limits: {limits_ok}; monotone residual: {monotone}",
            worst * 1e3,
            overall * 1e3
        ),
    )
}

const E2E_SEED: u64 = 7;
const E2E_WILD: usize = 50;
const E2E_EPOCHS: usize = 300;
const E2E_EPISODES: usize = 20;

struct PipelineRun {
    full: EvaluationReport,
    ablation: EvaluationReport,
    /// Serialized rollout reports and model files, in a fixed order.
    artifacts: Vec<Vec<u8>>,
    elapsed: Duration,
}

fn train_and_roll(name: &str, data: &[Trajectory], seed: u64) -> (EvaluationReport, Vec<u8>) {
    let config = PolicyConfig {
        epochs: E2E_EPOCHS,
        seed,
        ..PolicyConfig::desk()
    };
    let start = Instant::now();
    let (model, _) = train_with(data, &config, |epoch, loss| {
        if (epoch + 1) % 100 == 0 {
            eprintln!("  [{name}] epoch {} loss {loss:.3e} ({:.0} s)", epoch + 1, start.elapsed().as_secs_f64());
        }
    })
    .unwrap();
    let spec = RolloutTaskSpec::desk(TaskKind::Reach);
    let report = evaluate(&model, &spec, E2E_EPISODES, seed, &RolloutOptions::default()).unwrap();
    (report, encode_model(&model))
}

fn run_pipeline(seed: u64) -> PipelineRun {
    let start = Instant::now();
    let spec = SynthTaskSpec::desk(TaskKind::Reach);
    let data = synth_generate(&spec, E2E_WILD + 1, seed).unwrap();
    let aligned = align_all(&data.in_the_wild, &data.in_scene, AlignMode::Pivoted).unwrap();
    let full_set: Vec<Trajectory> =
        std::iter::once(data.in_scene.clone()).chain(aligned.into_iter().map(|a| a.aligned)).collect();
    let wild_only: Vec<Trajectory> = data.in_the_wild.iter().map(assume_robot_frame).collect();
    let (full, full_model) = train_and_roll("full recipe", &full_set, seed);
    let (ablation, ablation_model) = train_and_roll("wild-only ablation", &wild_only, seed);
    let artifacts = vec![
        serde_json::to_vec(&full).unwrap(),
        serde_json::to_vec(&ablation).unwrap(),
        full_model,
        ablation_model,
    ];
    PipelineRun {
        full,
        ablation,
        artifacts,
        elapsed: start.elapsed(),
    }
}

fn end_to_end(run: &PipelineRun) -> Verdict {
    let (f, a) = (run.full.success_rate, run.ablation.success_rate);
    let t = secs(run.elapsed);
    verdict(
        f >= 0.8 && a < f && t < 1800.0,
        format!(
            "{E2E_WILD} wild + 1 in-scene reach demos, {E2E_EPOCHS} epochs, {E2E_EPISODES} episodes: full recipe success {f:.2} (>= 0.8), wild-only ablation {a:.2} (< full), {:.1} min (< 30 min)",
            t / 60.0
        ),
    )
}

fn determinism(first: &PipelineRun) -> Verdict {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(2).build().unwrap();
    let second = pool.install(|| run_pipeline(E2E_SEED));
    let same = first.artifacts == second.artifacts;
    verdict(
        same,
        format!(
            "repeat of the end-to-end pipeline (seed {E2E_SEED}, different thread count): rollout reports and model files byte-identical: {same}"
        ),
    )
}

fn grasp_threshold() -> Verdict {
    // Thumb at the origin so that the tip distance is exactly the offset.
    let open = HandPose::from_arrays(&OPEN_HAND);
    let open = open.translated(&-open.thumb());
    let with_gap = |gap: f64| {
        let far = (2..5).fold(open, |h, i| h.with_tip(i, Vec3::new(0.0, 0.1 * i as f64, 0.0)));
        far.with_tip(1, Vec3::new(gap, 0.0, 0.0))
    };
    let at = with_gap(0.05);
    let unchanged = grasp_adjust(&at) == at;
    let below = with_gap(0.0499);
    let adjusted = grasp_adjust(&below);
    let d = (adjusted.fingertips[1] - adjusted.thumb()).norm();
    let triggers = adjusted != below && d < 0.0499 && d > 0.0;
    verdict(
        unchanged && triggers,
        format!("0.05 m unchanged: {unchanged}; 0.0499 m adjusted: {triggers} (distance after {d:.5} m)"),
    )
}

fn main() {
    let quick = std::env::args().any(|a| a == "--quick");
    let mut results: Vec<(usize, Verdict)> = Vec::new();
    let mut report = |n: usize, v: Verdict| {
        let mut out = std::io::stdout().lock();
        writeln!(out, "criterion {n}: {} - {}", if v.pass { "PASS" } else { "FAIL" }, v.detail).unwrap();
        out.flush().unwrap();
        results.push((n, v));
    };
    report(1, equivariance());
    report(2, gradient_check());
    report(3, registration());
    report(4, alignment());
    report(5, geometry());
    report(6, kinematics());
    if quick {
        eprintln!("--quick: skipping criteria 7 and 8");
    } else {
        let first = run_pipeline(E2E_SEED);
        report(7, end_to_end(&first));
        report(8, determinism(&first));
    }
    report(9, grasp_threshold());

    let failed: Vec<usize> = results.iter().filter(|(_, v)| !v.pass).map(|(n, _)| *n).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
