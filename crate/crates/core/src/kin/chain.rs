use std::path::Path;

use nalgebra::SMatrix;
use serde::{Deserialize, Serialize};

use super::{JointState, KinError, ARM_DOF, HAND_DOF, JOINT_COUNT};
use crate::demos::{HandPose, FINGERTIPS};
use crate::geom3d::{RigidTransform, Vec3};

/// The shipped arm + hand description.
pub const REFERENCE_CHAIN_JSON: &str = include_str!("../../data/reference_chain.json");

const CHAIN_VERSION: u32 = 1;

/// Stacked fingertip-position Jacobian: rows are (tip, xyz), columns joints.
pub type FingertipJacobian = SMatrix<f64, { 3 * FINGERTIPS }, JOINT_COUNT>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    pub name: String,
    pub parent: Option<String>,
    /// Rotation axis in the joint frame.
    pub axis: [f64; 3],
    /// Fixed parent-to-joint transform, applied before the joint rotation.
    pub origin: RigidTransform,
    pub limits: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FingertipSpec {
    pub name: String,
    pub parent: String,
    pub origin: RigidTransform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainFile {
    version: u32,
    name: String,
    #[serde(default)]
    description: String,
    arm_dof: usize,
    hand_dof: usize,
    joints: Vec<JointSpec>,
    fingertips: Vec<FingertipSpec>,
    home: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    closed_hand: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    home_fingertips: Option<[[f64; 3]; FINGERTIPS]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    closed_fingertips: Option<[[f64; 3]; FINGERTIPS]>,
}

/// A tree of revolute joints with five fingertip frames. Joints are stored
/// in topological order (every parent precedes its children).
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    file: ChainFile,
    axes: Vec<Vec3>,
    parents: Vec<Option<usize>>,
    tip_parents: [usize; FINGERTIPS],
    /// Joints on the path from the base to each fingertip.
    tip_paths: [Vec<usize>; FINGERTIPS],
}

struct Frames {
    joint: Vec<RigidTransform>,
    tips: [Vec3; FINGERTIPS],
}

impl KinematicChain {
    /// The bundled reference chain.
    pub fn reference() -> Self {
        Self::from_json(REFERENCE_CHAIN_JSON).expect("bundled chain description is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, KinError> {
        let file: ChainFile = serde_json::from_str(text)?;
        Self::from_file(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KinError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String, KinError> {
        Ok(serde_json::to_string_pretty(&self.file)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), KinError> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    fn from_file(file: ChainFile) -> Result<Self, KinError> {
        let bad = |m: String| Err(KinError::InvalidChain(m));
        if file.version != CHAIN_VERSION {
            return bad(format!("unsupported chain version {}", file.version));
        }
        if file.joints.len() != JOINT_COUNT || file.arm_dof != ARM_DOF || file.hand_dof != HAND_DOF {
            return bad(format!(
                "expected {ARM_DOF}+{HAND_DOF} joints, found {} ({}+{} declared)",
                file.joints.len(),
                file.arm_dof,
                file.hand_dof
            ));
        }
        if file.fingertips.len() != FINGERTIPS {
            return bad(format!("expected {FINGERTIPS} fingertips, found {}", file.fingertips.len()));
        }
        if file.home.len() != JOINT_COUNT {
            return bad("home configuration must list 13 angles".into());
        }
        let index_of = |name: &str, upto: usize| file.joints[..upto].iter().position(|j| j.name == name);

        let mut parents = Vec::with_capacity(JOINT_COUNT);
        let mut axes = Vec::with_capacity(JOINT_COUNT);
        for (i, j) in file.joints.iter().enumerate() {
            if !(j.limits[0] < j.limits[1]) {
                return bad(format!("joint {} has limits {:?}", j.name, j.limits));
            }
            let axis = Vec3::from(j.axis);
            if !(axis.norm() > 1e-9) {
                return bad(format!("joint {} has a zero axis", j.name));
            }
            axes.push(axis.normalize());
            match &j.parent {
                None => parents.push(None),
                Some(p) => match index_of(p, i) {
                    Some(k) => parents.push(Some(k)),
                    None => return bad(format!("joint {} names unknown or later parent {p}", j.name)),
                },
            }
        }
        let mut tip_parents = [0usize; FINGERTIPS];
        for (t, spec) in file.fingertips.iter().enumerate() {
            tip_parents[t] = index_of(&spec.parent, JOINT_COUNT).ok_or_else(|| {
                KinError::InvalidChain(format!("fingertip {} names unknown joint {}", spec.name, spec.parent))
            })?;
        }
        let tip_paths = std::array::from_fn(|t| {
            let mut path = Vec::new();
            let mut cur = Some(tip_parents[t]);
            while let Some(j) = cur {
                path.push(j);
                cur = parents[j];
            }
            path.reverse();
            path
        });
        Ok(Self {
            file,
            axes,
            parents,
            tip_parents,
            tip_paths,
        })
    }

    pub fn name(&self) -> &str {
        &self.file.name
    }

    pub fn joints(&self) -> &[JointSpec] {
        &self.file.joints
    }

    pub fn fingertip_specs(&self) -> &[FingertipSpec] {
        &self.file.fingertips
    }

    pub fn home(&self) -> JointState {
        JointState(std::array::from_fn(|i| self.file.home[i]))
    }

    /// Home arm pose with the hand closed, when the chain documents one.
    pub fn home_closed(&self) -> Option<JointState> {
        let hand = self.file.closed_hand.as_ref()?;
        if hand.len() != HAND_DOF {
            return None;
        }
        let mut q = self.home();
        q.0[ARM_DOF..].copy_from_slice(hand);
        Some(q)
    }

    /// Fingertip positions the chain file documents for its home pose.
    pub fn documented_home_fingertips(&self) -> Option<HandPose> {
        self.file.home_fingertips.as_ref().map(HandPose::from_arrays)
    }

    pub fn documented_closed_fingertips(&self) -> Option<HandPose> {
        self.file.closed_fingertips.as_ref().map(HandPose::from_arrays)
    }

    /// Joints on the path from the base to fingertip `tip`.
    pub fn tip_path(&self, tip: usize) -> &[usize] {
        &self.tip_paths[tip]
    }

    pub fn limits(&self, joint: usize) -> (f64, f64) {
        let l = self.file.joints[joint].limits;
        (l[0], l[1])
    }

    pub fn clamp(&self, q: &JointState) -> JointState {
        JointState(std::array::from_fn(|i| {
            let (lo, hi) = self.limits(i);
            q.0[i].clamp(lo, hi)
        }))
    }

    pub fn within_limits(&self, q: &JointState) -> bool {
        (0..JOINT_COUNT).all(|i| {
            let (lo, hi) = self.limits(i);
            q.0[i] >= lo && q.0[i] <= hi
        })
    }

    /// Errors with the first joint outside its limits.
    pub fn check_limits(&self, q: &JointState) -> Result<(), KinError> {
        for i in 0..JOINT_COUNT {
            let (lo, hi) = self.limits(i);
            let value = q.0[i];
            if !(value >= lo && value <= hi) {
                return Err(KinError::JointLimitViolation {
                    joint: self.file.joints[i].name.clone(),
                    value,
                    lo,
                    hi,
                });
            }
        }
        Ok(())
    }

    fn frames(&self, q: &JointState) -> Frames {
        let mut joint: Vec<RigidTransform> = Vec::with_capacity(JOINT_COUNT);
        for i in 0..JOINT_COUNT {
            let spec = &self.file.joints[i];
            let parent = self.parents[i].map_or(RigidTransform::identity(), |p| joint[p]);
            let rot = RigidTransform::from_axis_angle(&self.axes[i], q.0[i]);
            joint.push(parent.compose(&spec.origin).compose(&rot));
        }
        let tips = std::array::from_fn(|t| {
            let spec = &self.file.fingertips[t];
            joint[self.tip_parents[t]].apply(spec.origin.translation())
        });
        Frames { joint, tips }
    }

    /// Forward kinematics: the five fingertip positions in the base frame.
    pub fn fk(&self, q: &JointState) -> HandPose {
        HandPose::new(self.frames(q).tips)
    }

    /// Forward kinematics that refuses configurations outside the limits.
    pub fn fk_strict(&self, q: &JointState) -> Result<HandPose, KinError> {
        self.check_limits(q)?;
        Ok(self.fk(q))
    }

    /// Fingertips plus the analytic position Jacobian
    /// (`∂pᵢ/∂qⱼ = ωⱼ × (pᵢ − oⱼ)` for joints on tip i's path).
    pub fn fk_with_jacobian(&self, q: &JointState) -> (HandPose, FingertipJacobian) {
        let frames = self.frames(q);
        let mut jac = FingertipJacobian::zeros();
        for t in 0..FINGERTIPS {
            let p = frames.tips[t];
            for &j in &self.tip_paths[t] {
                let frame = &frames.joint[j];
                let omega = frame.apply_vector(&self.axes[j]);
                let col = omega.cross(&(p - frame.translation()));
                for k in 0..3 {
                    jac[(3 * t + k, j)] = col[k];
                }
            }
        }
        (HandPose::new(frames.tips), jac)
    }
}
