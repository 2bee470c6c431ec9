use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{accumulate_gradients, Input};
use super::{augment, windows, Params, PolicyConfig, PolicyError, PolicyModel, TrainingSample};
use crate::demos::{Dataset, FrameOfReference, Trajectory};

/// Samples per gradient work unit. Fixed so results do not depend on the
/// number of worker threads.
pub const CHUNK: usize = 16;

const SHUFFLE_STREAM: u64 = 1;
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    /// Mean training loss of each epoch (over augmented samples).
    pub epoch_loss: Vec<f64>,
    pub windows: usize,
    pub steps: usize,
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    m: Params,
    v: Params,
    t: i32,
}

impl Adam {
    pub fn new(params: &Params, lr: f64) -> Self {
        Self {
            lr,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut Params, grads: &Params) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for (((p, g), m), v) in params
            .values_mut()
            .iter_mut()
            .zip(grads.values())
            .zip(self.m.values_mut())
            .zip(self.v.values_mut())
        {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
            });
        }
    }
}

/// All training windows of `trajectories`, which must already be expressed
/// in the robot base frame with `config.N` points.
pub fn training_windows(trajectories: &[Trajectory], config: &PolicyConfig) -> Result<Vec<TrainingSample>, PolicyError> {
    if trajectories.is_empty() {
        return Err(PolicyError::EmptyDataset);
    }
    let mut out = Vec::new();
    for (i, t) in trajectories.iter().enumerate() {
        if t.frame_of_reference != FrameOfReference::RobotBase {
            return Err(PolicyError::NonAlignedInput(format!(
                "trajectory {i} is expressed in {:?}",
                t.frame_of_reference
            )));
        }
        if t.n_points() != config.N {
            return Err(PolicyError::ShapeMismatch(format!(
                "trajectory {i} has {} object points, config expects {}",
                t.n_points(),
                config.N
            )));
        }
        out.extend(windows(t, config.T_o, config.T_p));
    }
    if out.is_empty() {
        return Err(PolicyError::EmptyDataset);
    }
    Ok(out)
}

/// Trains on the in-scene trajectory plus the (already aligned) wild ones.
pub fn train_dataset(dataset: &Dataset, config: &PolicyConfig) -> Result<(PolicyModel, TrainingLog), PolicyError> {
    let all: Vec<Trajectory> = dataset.trajectories().cloned().collect();
    train(&all, config)
}

pub fn train(trajectories: &[Trajectory], config: &PolicyConfig) -> Result<(PolicyModel, TrainingLog), PolicyError> {
    train_with(trajectories, config, |_, _| {})
}

/// Minibatch Adam on the mean-squared fingertip error. `on_epoch` receives
/// the epoch index and its mean loss.
///
/// Shuffling and augmentation draw from one generator on the calling thread;
/// gradients are computed over fixed-size chunks in parallel and summed in
/// chunk order, so the result is independent of the thread count.
pub fn train_with(
    trajectories: &[Trajectory],
    config: &PolicyConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<(PolicyModel, TrainingLog), PolicyError> {
    config.validate()?;
    let data = training_windows(trajectories, config)?;
    let mut model = PolicyModel::new(config)?;
    let mut adam = Adam::new(model.params(), config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = TrainingLog {
        epoch_loss: Vec::with_capacity(config.epochs),
        windows: data.len(),
        steps: 0,
    };

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let samples: Vec<TrainingSample> = batch
                .iter()
                .map(|&i| {
                    if config.augment {
                        augment(&data[i], &mut rng, config.scale_pivot)
                    } else {
                        data[i].clone()
                    }
                })
                .collect();
            let refs: Vec<&TrainingSample> = samples.iter().collect();
            let total = refs.len();
            let parts = refs
                .par_chunks(CHUNK)
                .map(|chunk| {
                    let mut g = model.params().zeros_like();
                    let loss = accumulate_gradients(&model, chunk, total, &mut g)?;
                    Ok((loss, g))
                })
                .collect::<Result<Vec<_>, PolicyError>>()?;
            let mut grads = model.params().zeros_like();
            let mut loss = 0.0;
            for (l, g) in &parts {
                loss += l;
                grads.add_scaled(g, 1.0);
            }
            adam.step(model.params_mut(), &grads);
            log.steps += 1;
            epoch_sum += loss * total as f64;
        }
        let mean = epoch_sum / data.len() as f64;
        log.epoch_loss.push(mean);
        on_epoch(epoch, mean);
    }
    Ok((model, log))
}

/// Mean-squared error of the model's predictions over every window of
/// `trajectories`, without augmentation.
pub fn evaluate_mse(model: &PolicyModel, trajectories: &[Trajectory]) -> Result<f64, PolicyError> {
    let data = training_windows(trajectories, model.config())?;
    let sums = data
        .par_chunks(CHUNK)
        .map(|chunk| {
            let inputs: Vec<Input> = chunk
                .iter()
                .map(|s| {
                    model.check_input(s.input_fingertips.view(), s.input_objects.view())?;
                    Ok(Input {
                        fingertips: s.input_fingertips.view(),
                        objects: s.input_objects.view(),
                    })
                })
                .collect::<Result<_, PolicyError>>()?;
            let (out, _) = model.forward(&inputs);
            let refs: Vec<&TrainingSample> = chunk.iter().collect();
            let diff = out - model.pack(&refs);
            Ok(diff.iter().map(|v| v * v).sum::<f64>())
        })
        .collect::<Result<Vec<f64>, PolicyError>>()?;
    let count = data.len() * data[0].target_fingertips.len();
    Ok(sums.iter().sum::<f64>() / count as f64)
}

