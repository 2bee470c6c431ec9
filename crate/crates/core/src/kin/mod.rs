//! Arm + hand kinematics: the 13-joint chain, forward kinematics to the five
//! fingertips, damped-least-squares IK over all joints at once, and the
//! grasp-tightening heuristic.

mod chain;
mod grasp;
mod ik;

pub use chain::{FingertipJacobian, FingertipSpec, JointSpec, KinematicChain, REFERENCE_CHAIN_JSON};
pub use grasp::{grasp_adjust, grasp_adjust_with, GraspOptions};
pub use ik::{ik, IkOptions, IkReport};

use serde::{Deserialize, Serialize};

pub const ARM_DOF: usize = 7;
pub const HAND_DOF: usize = 6;
pub const JOINT_COUNT: usize = ARM_DOF + HAND_DOF;

#[derive(Debug, thiserror::Error)]
pub enum KinError {
    #[error("InvalidChain: {0}")]
    InvalidChain(String),
    #[error("JointLimitViolation: joint {joint} at {value} rad outside [{lo}, {hi}]")]
    JointLimitViolation { joint: String, value: f64, lo: f64, hi: f64 },
    #[error("Io: {0}")]
    Io(#[from] std::io::Error),
    #[error("Json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Joint angles in radians, arm joints first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointState(pub [f64; JOINT_COUNT]);

impl JointState {
    pub fn zeros() -> Self {
        Self([0.0; JOINT_COUNT])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<[f64; JOINT_COUNT]> for JointState {
    fn from(a: [f64; JOINT_COUNT]) -> Self {
        Self(a)
    }
}
