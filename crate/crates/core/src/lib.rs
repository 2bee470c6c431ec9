//! Human-to-robot point-policy pipeline.
//!
//! The crate covers the whole path from perception outputs to a deployed
//! policy running in a kinematic simulator:
//!
//! - [`geom3d`]: cameras, stereo depth, rigid transforms and registration.
//! - [`demos`]: the demonstration data model, binary trajectory files,
//!   perception-bundle ingestion and the scripted synthetic generator.
//! - [`align`]: mapping in-the-wild demonstrations into the robot base frame
//!   using the single in-scene demonstration as anchor.
//! - [`vnpolicy`]: the vector-neuron + transformer point policy, its
//!   augmentation, loss, gradients and training loop.
//! - [`kin`]: the 13-DOF arm + hand chain, forward and inverse kinematics,
//!   and the grasp-tightening heuristic.
//! - [`rollout`]: the closed-loop deployment simulator.
//! - [`cli`]: the command implementations behind the `aina` binary.

pub mod align;
pub mod cli;
pub mod demos;
pub mod geom3d;
pub mod kin;
pub mod rollout;
pub mod vnpolicy;

pub use geom3d::{RigidTransform, Vec3};
