use ndarray::Array3;

use super::TrainingSample;
use crate::demos::{Trajectory, FINGERTIPS};

/// Window anchored at frame `t` (the last observed frame): history
/// `t−T_o+1 ..= t` and targets `t+1 ..= t+T_p`, with out-of-range history
/// repeating the first frame and out-of-range targets the final frame.
pub fn window(trajectory: &Trajectory, t: usize, t_o: usize, t_p: usize) -> TrainingSample {
    let frames = &trajectory.frames;
    let last = frames.len() - 1;
    let n = trajectory.n_points();
    let hist = |k: usize| (t + k + 1).saturating_sub(t_o).min(last);
    let input_objects = Array3::from_shape_fn((t_o, n, 3), |(k, j, x)| frames[hist(k)].objects[j][x]);
    let input_fingertips = Array3::from_shape_fn((t_o, FINGERTIPS, 3), |(k, i, x)| frames[hist(k)].hand.fingertips[i][x]);
    let target_fingertips =
        Array3::from_shape_fn((t_p, FINGERTIPS, 3), |(k, i, x)| frames[(t + 1 + k).min(last)].hand.fingertips[i][x]);
    TrainingSample {
        input_objects,
        input_fingertips,
        target_fingertips,
    }
}

/// Stride-1 windows anchored at every frame that has at least one real
/// future frame.
pub fn windows(trajectory: &Trajectory, t_o: usize, t_p: usize) -> Vec<TrainingSample> {
    (0..trajectory.len().saturating_sub(1))
        .map(|t| window(trajectory, t, t_o, t_p))
        .collect()
}
