//! Demonstration data model, trajectory files, perception ingestion and the
//! scripted synthetic generator.

mod format;
mod manifest;
mod perception;
pub mod scene;
pub mod synth;
mod validate;

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::geom3d::{centroid, is_finite, GeomError, RigidTransform, Vec3};

pub use format::{decode_trajectory, encode_trajectory, load, save, TRAJECTORY_MAGIC, TRAJECTORY_VERSION};
pub use manifest::{load_dataset, save_dataset, DatasetManifest, MANIFEST_FILE};
pub use perception::{
    ingest, render_bundle, BundleMeta, DepthGrid, GridKind, HandCameras, HandObservation, IngestMode,
    PerceptionBundle, RenderOptions, TrackObservation,
};
pub use synth::{synth_generate, HandTemplate, SynthTaskSpec, TaskKind, WorkspaceBox};
pub use validate::{validate, ValidationReport, Violation, ViolationKind};

/// Number of tracked fingertips (thumb, index, middle, ring, pinky).
pub const FINGERTIPS: usize = 5;
/// Nominal demonstration frame rate.
pub const DEFAULT_RATE_HZ: f64 = 10.0;
/// Sanity bound on the distance between any two fingertips of one hand.
pub const MAX_FINGERTIP_SPREAD: f64 = 0.4;
/// Thumb-to-finger distance below which a hand counts as grasping.
pub const GRASP_DISTANCE: f64 = 0.05;

#[derive(Debug, thiserror::Error)]
pub enum DemoError {
    #[error("BadMagic: not a trajectory file")]
    BadMagic,
    #[error("UnsupportedVersion: {0}")]
    UnsupportedVersion(u16),
    #[error("TruncatedFile: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: usize, found: usize },
    #[error("ChecksumMismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("InvalidTrajectory: {0}")]
    InvalidTrajectory(String),
    #[error("FrameCountMismatch: {0}")]
    FrameCountMismatch(String),
    #[error("MissingDepth: frame {frame}, track {track} at ({u:.3}, {v:.3})")]
    MissingDepth { frame: usize, track: usize, u: f64, v: f64 },
    #[error("MissingDepthHeader: {0}")]
    MissingDepthHeader(String),
    #[error("AllPointsInvisible: track {0} is never visible")]
    AllPointsInvisible(usize),
    #[error("MalformedBundle: {0}")]
    MalformedBundle(String),
    #[error("RenderConflict: {0}")]
    RenderConflict(String),
    #[error("InvalidWorkspace: {0}")]
    InvalidWorkspace(String),
    #[error("InvalidCount: {0}")]
    InvalidCount(String),
    #[error("GenerationFailed: {0}")]
    GenerationFailed(String),
    #[error(transparent)]
    Geometry(#[from] GeomError),
    #[error("Io: {0}")]
    Io(#[from] std::io::Error),
    #[error("Json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("Csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Five fingertip positions in meters, ordered thumb, index, middle, ring,
/// pinky.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandPose {
    #[serde(with = "vec3_array")]
    pub fingertips: [Vec3; FINGERTIPS],
}

impl HandPose {
    pub fn new(fingertips: [Vec3; FINGERTIPS]) -> Self {
        Self { fingertips }
    }

    pub fn from_arrays(tips: &[[f64; 3]; FINGERTIPS]) -> Self {
        Self::new(std::array::from_fn(|i| Vec3::from(tips[i])))
    }

    pub fn to_arrays(&self) -> [[f64; 3]; FINGERTIPS] {
        std::array::from_fn(|i| self.fingertips[i].into())
    }

    pub fn thumb(&self) -> Vec3 {
        self.fingertips[0]
    }

    /// Copy with fingertip `i` replaced.
    pub fn with_tip(mut self, i: usize, p: Vec3) -> Self {
        self.fingertips[i] = p;
        self
    }

    pub fn transformed(&self, t: &RigidTransform) -> Self {
        Self::new(self.fingertips.map(|p| t.apply(&p)))
    }

    pub fn translated(&self, offset: &Vec3) -> Self {
        Self::new(self.fingertips.map(|p| p + offset))
    }

    pub fn is_finite(&self) -> bool {
        self.fingertips.iter().all(is_finite)
    }

    pub fn max_spread(&self) -> f64 {
        let mut best = 0.0f64;
        for i in 0..FINGERTIPS {
            for j in i + 1..FINGERTIPS {
                best = best.max((self.fingertips[i] - self.fingertips[j]).norm());
            }
        }
        best
    }

    /// Distance from the thumb to each other fingertip (index..pinky).
    pub fn thumb_distances(&self) -> [f64; FINGERTIPS - 1] {
        std::array::from_fn(|i| (self.fingertips[i + 1] - self.fingertips[0]).norm())
    }

    /// True when any finger is closer than [`GRASP_DISTANCE`] to the thumb.
    pub fn is_grasping(&self) -> bool {
        self.thumb_distances().iter().any(|d| *d < GRASP_DISTANCE)
    }

    pub fn centroid(&self) -> Vec3 {
        centroid(&self.fingertips)
    }
}

/// The N tracked object points of one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObjectPoints(pub Vec<Vec3>);

impl ObjectPoints {
    pub fn centroid(&self) -> Vec3 {
        centroid(&self.0)
    }

    pub fn transformed(&self, t: &RigidTransform) -> Self {
        Self(self.0.iter().map(|p| t.apply(p)).collect())
    }
}

impl Deref for ObjectPoints {
    type Target = Vec<Vec3>;
    fn deref(&self) -> &Self::Target {
        &self.0
    }
}

impl DerefMut for ObjectPoints {
    fn deref_mut(&mut self) -> &mut Self::Target {
        &mut self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub timestamp: f64,
    pub objects: ObjectPoints,
    pub hand: HandPose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    InTheWild,
    InScene,
}

impl Source {
    pub fn to_byte(self) -> u8 {
        match self {
            Source::InTheWild => 0,
            Source::InScene => 1,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Source::InTheWild),
            1 => Some(Source::InScene),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameOfReference {
    WorldGravityAligned,
    RobotBase,
}

impl FrameOfReference {
    pub fn to_byte(self) -> u8 {
        match self {
            FrameOfReference::WorldGravityAligned => 0,
            FrameOfReference::RobotBase => 1,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(FrameOfReference::WorldGravityAligned),
            1 => Some(FrameOfReference::RobotBase),
            _ => None,
        }
    }
}

/// A timestamped sequence of object points and fingertips.
///
/// In-scene trajectories are always expressed in the robot base frame.
/// In-the-wild trajectories start in the gravity-aligned world frame and are
/// re-tagged `RobotBase` once aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub frames: Vec<Frame>,
    pub source: Source,
    pub frame_of_reference: FrameOfReference,
    pub rate_hz: f64,
    pub task_name: String,
    pub prompts: Vec<String>,
}

impl Trajectory {
    /// Builds a trajectory and checks its structural invariants.
    pub fn new(
        frames: Vec<Frame>,
        source: Source,
        frame_of_reference: FrameOfReference,
        task_name: impl Into<String>,
        prompts: Vec<String>,
    ) -> Result<Self, DemoError> {
        let t = Self {
            frames,
            source,
            frame_of_reference,
            rate_hz: DEFAULT_RATE_HZ,
            task_name: task_name.into(),
            prompts,
        };
        if let Some(v) = t.violations().into_iter().next() {
            return Err(DemoError::InvalidTrajectory(v.to_string()));
        }
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Point count of the first frame (0 for an empty trajectory).
    pub fn n_points(&self) -> usize {
        self.frames.first().map_or(0, |f| f.objects.len())
    }

    pub fn hands(&self) -> impl Iterator<Item = &HandPose> {
        self.frames.iter().map(|f| &f.hand)
    }

    /// Applies `t` to every object point and fingertip.
    pub fn transformed(&self, t: &RigidTransform) -> Self {
        let frames = self
            .frames
            .iter()
            .map(|f| Frame {
                timestamp: f.timestamp,
                objects: f.objects.transformed(t),
                hand: f.hand.transformed(t),
            })
            .collect();
        Self {
            frames,
            ..self.clone()
        }
    }

    /// Rounds every coordinate to `f32` precision, the resolution of the
    /// on-disk format.
    pub fn quantized(mut self) -> Self {
        let q = |p: &mut Vec3| {
            for c in p.iter_mut() {
                *c = *c as f32 as f64;
            }
        };
        for f in &mut self.frames {
            f.objects.iter_mut().for_each(q);
            f.hand.fingertips.iter_mut().for_each(q);
        }
        self
    }

    /// Structural invariant violations, frame-indexed where applicable.
    pub fn violations(&self) -> Vec<Violation> {
        validate::trajectory_violations(self, None)
    }
}

/// One in-scene demonstration plus K in-the-wild demonstrations sharing the
/// same point count.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub in_scene: Trajectory,
    pub in_the_wild: Vec<Trajectory>,
    pub n_points: usize,
    pub metadata: DatasetMetadata,
}

impl Dataset {
    pub fn trajectories(&self) -> impl Iterator<Item = &Trajectory> {
        std::iter::once(&self.in_scene).chain(self.in_the_wild.iter())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub seed: u64,
    pub generator_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<SynthTaskSpec>,
    /// Per in-the-wild trajectory generator ground truth, when known.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ground_truth: Vec<WildGroundTruth>,
}

/// How the generator placed one in-the-wild demonstration in its world
/// frame: `world = Translate(offset) ∘ RotZ(−yaw) ∘ local`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WildGroundTruth {
    pub yaw: f64,
    pub offset: [f64; 3],
    pub surface_height: f64,
}

impl WildGroundTruth {
    pub fn world_from_local(&self) -> RigidTransform {
        RigidTransform::from_translation(Vec3::from(self.offset))
            .compose(&RigidTransform::rot_z(-self.yaw))
    }
}

mod vec3_array {
    use super::{Vec3, FINGERTIPS};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Vec3; FINGERTIPS], s: S) -> Result<S::Ok, S::Error> {
        let arr: [[f64; 3]; FINGERTIPS] = std::array::from_fn(|i| v[i].into());
        arr.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[Vec3; FINGERTIPS], D::Error> {
        let arr = <[[f64; 3]; FINGERTIPS]>::deserialize(d)?;
        Ok(std::array::from_fn(|i| Vec3::from(arr[i])))
    }
}
