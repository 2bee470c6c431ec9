use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use super::{JointState, KinematicChain, JOINT_COUNT};
use crate::demos::{HandPose, FINGERTIPS};

type Square = SMatrix<f64, JOINT_COUNT, JOINT_COUNT>;
type JointVec = SVector<f64, JOINT_COUNT>;
type TipVec = SVector<f64, { 3 * FINGERTIPS }>;

const MAX_DAMPING: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IkOptions {
    /// Stop once the fingertip RMS error drops below this (meters).
    pub tolerance: f64,
    pub max_iterations: usize,
    pub initial_damping: f64,
    /// Tikhonov weight on each step away from the current iterate.
    pub regularization: f64,
}

impl Default for IkOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            max_iterations: 200,
            initial_damping: 1e-3,
            regularization: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IkReport {
    pub converged: bool,
    pub iterations: usize,
    /// Final fingertip RMS error in meters.
    pub residual: f64,
    /// RMS error after the warm start and after every accepted step.
    pub residual_history: Vec<f64>,
}

fn residual_vector(current: &HandPose, target: &HandPose) -> TipVec {
    let mut r = TipVec::zeros();
    for t in 0..FINGERTIPS {
        let e = target.fingertips[t] - current.fingertips[t];
        r.fixed_rows_mut::<3>(3 * t).copy_from(&e);
    }
    r
}

fn rms(r: &TipVec) -> f64 {
    (r.norm_squared() / FINGERTIPS as f64).sqrt()
}

/// Damped least-squares IK over all 13 joints at once, warm-started at
/// `current`. Never fails: the best iterate is returned together with a
/// report whose `converged` flag says whether the tolerance was met.
pub fn ik(
    chain: &KinematicChain,
    target: &HandPose,
    current: &JointState,
    opts: &IkOptions,
) -> (JointState, IkReport) {
    let mut q = chain.clamp(current);
    let (pose, mut jac) = chain.fk_with_jacobian(&q);
    let mut r = residual_vector(&pose, target);
    let mut err = rms(&r);
    let mut history = vec![err];
    let mut damping = opts.initial_damping;
    let mut iterations = 0;

    while err >= opts.tolerance && iterations < opts.max_iterations && damping < MAX_DAMPING {
        iterations += 1;
        let jt = jac.transpose();
        let lhs: Square = jt * jac + Square::identity() * (damping + opts.regularization);
        let rhs: JointVec = jt * r;
        let Some(step) = lhs.cholesky().map(|c| c.solve(&rhs)) else {
            damping *= 10.0;
            continue;
        };
        let candidate = chain.clamp(&JointState(std::array::from_fn(|i| q.0[i] + step[i])));
        let (cand_pose, cand_jac) = chain.fk_with_jacobian(&candidate);
        let cand_r = residual_vector(&cand_pose, target);
        let cand_err = rms(&cand_r);
        if cand_err.is_finite() && cand_err <= err {
            q = candidate;
            jac = cand_jac;
            r = cand_r;
            err = cand_err;
            history.push(err);
            damping /= 2.0;
        } else {
            damping *= 10.0;
        }
    }

    let report = IkReport {
        converged: err < opts.tolerance,
        iterations,
        residual: err,
        residual_history: history,
    };
    (q, report)
}
