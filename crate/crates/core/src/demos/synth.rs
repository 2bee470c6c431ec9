//! Scripted synthetic demonstrations.
//!
//! Each demonstration samples an object layout on a table, then a scripted
//! expert moves one anchor fingertip through minimum-jerk segments while the
//! rest of the hand follows an open/closed template. Object points react to
//! the hand through [`SceneState`]. The in-scene demonstration is produced
//! directly in the robot base frame; in-the-wild ones are produced in a
//! local table frame at a random height and then placed in a world frame at
//! a random yaw and offset.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::scene::{ButtonState, Cluster, ClusterKind, SceneState};
use super::{
    Dataset, DatasetMetadata, DemoError, Frame, FrameOfReference, HandPose, Source, Trajectory, WildGroundTruth,
    FINGERTIPS,
};
use crate::geom3d::{RigidTransform, Vec3};

pub const GENERATOR_VERSION: &str = concat!("aina-synth/", env!("CARGO_PKG_VERSION"));

/// Fingertips of the reference hand at the home pose, open.
pub const OPEN_HAND: [[f64; 3]; FINGERTIPS] = [
    [0.34673238758280495, 0.03, 0.1986183170630573],
    [0.40072246799316247, 0.027, 0.13208581452807722],
    [0.4007304312577449, 0.009, 0.12708582086943948],
    [0.40101819434077113, -0.009, 0.13406383018204207],
    [0.4021851732020408, -0.027, 0.15197588011517693],
];

/// Fingertips of the reference hand at the home arm pose, fingers closed.
pub const CLOSED_HAND: [[f64; 3]; FINGERTIPS] = [
    [0.3681034845678956, 0.03, 0.19064647125297257],
    [0.3615425869957163, 0.027, 0.16334412039335594],
    [0.3615505502602987, 0.009, 0.15834412673471823],
    [0.3634055085832228, -0.009, 0.16407180381270964],
    [0.3708412684040838, -0.027, 0.1769825248073999],
];

const SPHERE_RADIUS: f64 = 0.03;
const CUBE_SIZE: f64 = 0.04;
const MARKER_SIZE: [f64; 3] = [0.08, 0.08, 0.005];
const GOAL_DISTANCE: f64 = 0.12;
const BUTTON_SIZE: [f64; 3] = [0.05, 0.05, 0.04];
const BUTTON_TRAVEL: f64 = 0.03;
const BUTTON_HALF_WIDTH: f64 = 0.035;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Reach,
    PickPlace,
    Press,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Reach => "reach",
            Self::PickPlace => "pick_place",
            Self::Press => "press",
        }
    }

    /// Which fingertip the scripted expert steers.
    pub fn anchor(self) -> usize {
        match self {
            Self::Reach | Self::PickPlace => 0,
            Self::Press => 1,
        }
    }

    fn default_prompts(self) -> Vec<String> {
        let p = match self {
            Self::Reach => "reach for the ball",
            Self::PickPlace => "pick up the block and put it on the pad",
            Self::Press => "press the button",
        };
        vec![p.to_string()]
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reach" => Ok(Self::Reach),
            "pick_place" | "pick-place" => Ok(Self::PickPlace),
            "press" => Ok(Self::Press),
            other => Err(format!("unknown task {other:?} (reach|pick_place|press)")),
        }
    }
}

/// Axis-aligned region for object placement. x/y place the object on the
/// table; z is the table height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkspaceBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for WorkspaceBox {
    fn default() -> Self {
        Self {
            min: [0.42, -0.12, 0.0],
            max: [0.58, 0.12, 0.0],
        }
    }
}

impl WorkspaceBox {
    /// x and y must have positive extent; z may be flat.
    pub fn check(&self) -> Result<(), DemoError> {
        let finite = self.min.iter().chain(&self.max).all(|v| v.is_finite());
        if !finite || !(self.max[0] > self.min[0]) || !(self.max[1] > self.min[1]) || self.max[2] < self.min[2] {
            return Err(DemoError::InvalidWorkspace(format!(
                "box min {:?} max {:?} is degenerate",
                self.min, self.max
            )));
        }
        Ok(())
    }

    /// Uniform point in the box.
    pub fn sample(&self, rng: &mut impl Rng) -> Vec3 {
        Vec3::from(std::array::from_fn(|i| uniform(rng, self.min[i], self.max[i])))
    }
}

/// Open and closed fingertip configurations the scripted hand blends
/// between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandTemplate {
    pub open: [[f64; 3]; FINGERTIPS],
    pub closed: [[f64; 3]; FINGERTIPS],
}

impl Default for HandTemplate {
    fn default() -> Self {
        Self {
            open: OPEN_HAND,
            closed: CLOSED_HAND,
        }
    }
}

impl HandTemplate {
    fn tip(&self, i: usize, grip: f64) -> Vec3 {
        Vec3::from(self.open[i]) * (1.0 - grip) + Vec3::from(self.closed[i]) * grip
    }

    /// Hand with fingertip `anchor` at `at` and the others placed by the
    /// template blended to `grip` (0 open, 1 closed).
    pub fn pose(&self, anchor: usize, at: Vec3, grip: f64) -> HandPose {
        let base = self.tip(anchor, grip);
        HandPose::new(std::array::from_fn(|i| at + self.tip(i, grip) - base))
    }

    pub fn open_pose(&self) -> HandPose {
        HandPose::from_arrays(&self.open)
    }
}

/// Everything that parameterizes a synthetic task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthTaskSpec {
    pub task: TaskKind,
    pub n_points: usize,
    pub workspace: WorkspaceBox,
    /// Table height range of in-the-wild demonstrations, relative to the
    /// robot's table.
    pub height_range: [f64; 2],
    pub rate_hz: f64,
    /// Nominal duration of the main approach segment in seconds.
    pub motion_duration: f64,
    /// Relative jitter applied to `motion_duration`.
    pub duration_jitter: f64,
    /// Per-axis jitter of the in-the-wild starting hand position.
    pub start_jitter: f64,
    /// Horizontal extent of the random world-frame offset.
    pub world_offset_range: f64,
    /// How far the table sits below the world origin (the demonstrator's
    /// head when the recording started).
    pub table_depth: f64,
    pub hand: HandTemplate,
    pub prompts: Vec<String>,
}

impl Default for SynthTaskSpec {
    fn default() -> Self {
        Self::new(TaskKind::Reach)
    }
}

impl SynthTaskSpec {
    pub fn new(task: TaskKind) -> Self {
        Self {
            task,
            n_points: 500,
            workspace: WorkspaceBox::default(),
            height_range: [-0.15, 0.15],
            rate_hz: 10.0,
            motion_duration: 2.0,
            duration_jitter: 0.2,
            start_jitter: 0.03,
            world_offset_range: 0.3,
            table_depth: 0.8,
            hand: HandTemplate::default(),
            prompts: task.default_prompts(),
        }
    }

    /// Desk-scale variant with 32 object points.
    pub fn desk(task: TaskKind) -> Self {
        Self {
            n_points: 32,
            ..Self::new(task)
        }
    }

    pub fn check(&self) -> Result<(), DemoError> {
        self.workspace.check()?;
        let min_points = match self.task {
            TaskKind::Reach | TaskKind::Press => 1,
            TaskKind::PickPlace => 2,
        };
        if self.n_points < min_points {
            return Err(DemoError::InvalidCount(format!(
                "{} needs at least {min_points} object points",
                self.task.name()
            )));
        }
        if !(self.height_range[0] <= self.height_range[1]) {
            return Err(DemoError::InvalidWorkspace(format!("height range {:?}", self.height_range)));
        }
        let positive = [self.rate_hz, self.motion_duration];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(DemoError::GenerationFailed("rate and motion duration must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.duration_jitter) || !(self.start_jitter >= 0.0) || !(self.world_offset_range >= 0.0) {
            return Err(DemoError::GenerationFailed("jitter ranges must be non-negative".into()));
        }
        Ok(())
    }
}

/// Initial object layout of one episode, in the frame it was sampled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskLayout {
    pub task: TaskKind,
    pub scene: SceneState,
    /// Where the carried object's centroid should end up (pick-place).
    pub goal: Option<Vec3>,
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn sphere_points(rng: &mut impl Rng, center: Vec3, radius: f64, n: usize) -> Vec<Vec3> {
    (0..n)
        .map(|_| loop {
            let v = Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
            let len = v.norm();
            if len > 1e-9 {
                break center + v * (radius / len);
            }
        })
        .collect()
}

fn box_points(rng: &mut impl Rng, center: Vec3, size: [f64; 3], n: usize) -> Vec<Vec3> {
    let [a, b, c] = size;
    let areas = [b * c, b * c, a * c, a * c, a * b, a * b];
    let total: f64 = areas.iter().sum();
    (0..n)
        .map(|_| {
            let mut pick = rng.random::<f64>() * total;
            let mut face = 5;
            for (i, area) in areas.iter().enumerate() {
                if pick < *area {
                    face = i;
                    break;
                }
                pick -= area;
            }
            let mut p: [f64; 3] = std::array::from_fn(|k| (rng.random::<f64>() - 0.5) * size[k]);
            let axis = face / 2;
            p[axis] = if face % 2 == 0 { -0.5 } else { 0.5 } * size[axis];
            center + Vec3::from(p)
        })
        .collect()
}

/// Samples objects for `spec.task` with their base at `base` (x, y on the
/// table, z the table height).
pub fn sample_layout(spec: &SynthTaskSpec, base: Vec3, rng: &mut impl Rng) -> TaskLayout {
    let n = spec.n_points;
    let surface = base.z;
    match spec.task {
        TaskKind::Reach => {
            let center = base + Vec3::new(0.0, 0.0, SPHERE_RADIUS);
            let cluster = Cluster {
                kind: ClusterKind::Fixed,
                points: sphere_points(rng, center, SPHERE_RADIUS, n),
            };
            TaskLayout {
                task: spec.task,
                scene: SceneState::new(vec![cluster], surface),
                goal: None,
            }
        }
        TaskKind::PickPlace => {
            let n_item = n.div_ceil(2);
            let item_center = base + Vec3::new(0.0, 0.0, CUBE_SIZE / 2.0);
            let item = Cluster {
                kind: ClusterKind::Graspable,
                points: box_points(rng, item_center, [CUBE_SIZE; 3], n_item),
            };
            let phi = uniform(rng, -std::f64::consts::PI, std::f64::consts::PI);
            let pad = base + Vec3::new(GOAL_DISTANCE * phi.cos(), GOAL_DISTANCE * phi.sin(), MARKER_SIZE[2] / 2.0);
            let marker = Cluster {
                kind: ClusterKind::Fixed,
                points: box_points(rng, pad, MARKER_SIZE, n - n_item),
            };
            let goal = pad + Vec3::new(0.0, 0.0, MARKER_SIZE[2] / 2.0 + CUBE_SIZE / 2.0);
            TaskLayout {
                task: spec.task,
                scene: SceneState::new(vec![item, marker], surface),
                goal: Some(goal),
            }
        }
        TaskKind::Press => {
            let top = base + Vec3::new(0.0, 0.0, BUTTON_SIZE[2]);
            let mut points = vec![top];
            let center = base + Vec3::new(0.0, 0.0, BUTTON_SIZE[2] / 2.0);
            points.extend(box_points(rng, center, BUTTON_SIZE, n - 1));
            let button = ButtonState {
                cluster: 0,
                designated: 0,
                rest_top: top.z,
                half_width: BUTTON_HALF_WIDTH,
                travel: BUTTON_TRAVEL,
                displacement: 0.0,
            };
            let cluster = Cluster {
                kind: ClusterKind::Button,
                points,
            };
            TaskLayout {
                task: spec.task,
                scene: SceneState::new(vec![cluster], surface).with_button(button),
                goal: None,
            }
        }
    }
}

/// Minimum-jerk time scaling `10τ³ − 15τ⁴ + 6τ⁵`.
pub fn min_jerk(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

#[derive(Debug, Clone, Copy)]
struct Waypoint {
    time: f64,
    anchor: Vec3,
    grip: f64,
}

/// Piecewise minimum-jerk motion of the anchor fingertip and grip.
#[derive(Debug, Clone)]
struct Plan {
    points: Vec<Waypoint>,
}

impl Plan {
    fn start(anchor: Vec3) -> Self {
        Self {
            points: vec![Waypoint {
                time: 0.0,
                anchor,
                grip: 0.0,
            }],
        }
    }

    fn last(&self) -> Waypoint {
        *self.points.last().expect("plan has a start")
    }

    fn to(mut self, duration: f64, anchor: Vec3, grip: f64) -> Self {
        let time = self.last().time + duration;
        self.points.push(Waypoint { time, anchor, grip });
        self
    }

    fn hold(self, duration: f64) -> Self {
        let w = self.last();
        self.to(duration, w.anchor, w.grip)
    }

    fn grip(self, duration: f64, grip: f64) -> Self {
        let w = self.last();
        self.to(duration, w.anchor, grip)
    }

    fn duration(&self) -> f64 {
        self.last().time
    }

    fn at(&self, t: f64) -> (Vec3, f64) {
        let i = self.points.partition_point(|w| w.time <= t);
        if i == 0 {
            return (self.points[0].anchor, self.points[0].grip);
        }
        if i >= self.points.len() {
            let w = self.last();
            return (w.anchor, w.grip);
        }
        let (a, b) = (self.points[i - 1], self.points[i]);
        let s = min_jerk((t - a.time) / (b.time - a.time));
        (a.anchor + (b.anchor - a.anchor) * s, a.grip + (b.grip - a.grip) * s)
    }
}

fn script(spec: &SynthTaskSpec, layout: &TaskLayout, rest: &HandPose, rng: &mut impl Rng) -> Plan {
    let j = spec.duration_jitter;
    let d = spec.motion_duration * (1.0 + uniform(rng, -j, j));
    let anchor = spec.task.anchor();
    let plan = Plan::start(rest.fingertips[anchor]).hold(0.5);
    let up = |h: f64| Vec3::new(0.0, 0.0, h);
    match spec.task {
        TaskKind::Reach => {
            let target = layout.scene.clusters[0].centroid() + up(0.01);
            plan.to(d, target, 0.0).hold(0.5)
        }
        TaskKind::PickPlace => {
            let item = layout.scene.clusters[0].centroid();
            let goal = layout.goal.expect("pick-place layout has a goal");
            plan.to(d, item + up(0.06), 0.0)
                .to(0.6, item, 0.0)
                .grip(0.8, 1.0)
                .to(0.8, item + up(0.10), 1.0)
                .to(d, goal + up(0.10), 1.0)
                .to(0.8, goal, 1.0)
                .grip(0.6, 0.0)
                .to(0.8, goal + up(0.10), 0.0)
                .hold(0.5)
        }
        TaskKind::Press => {
            let top = layout.scene.designated_point().expect("press layout has a button");
            plan.to(d, top + up(0.02), 0.0)
                .to(0.8, top - up(BUTTON_TRAVEL), 0.0)
                .hold(0.3)
                .to(0.8, top + up(0.05), 0.0)
                .hold(0.5)
        }
    }
}

/// Scripted expert fingertip frames for `layout`. The anchor fingertip
/// starts at its position in `rest`; the hand shape always follows the
/// template, so frame 0 equals `rest` when `rest` is a translated open
/// template.
pub fn expert_hands(spec: &SynthTaskSpec, layout: &TaskLayout, rest: &HandPose, rng: &mut impl Rng) -> Vec<HandPose> {
    let plan = script(spec, layout, rest, rng);
    let frames = (plan.duration() * spec.rate_hz).round() as usize + 1;
    let anchor = spec.task.anchor();
    (0..frames)
        .map(|k| {
            let (at, grip) = plan.at(k as f64 / spec.rate_hz);
            spec.hand.pose(anchor, at, grip)
        })
        .collect()
}

/// Plays `hands` against the layout's scene, producing one frame per hand.
pub fn play(layout: &TaskLayout, hands: &[HandPose], rate_hz: f64) -> Vec<Frame> {
    let mut scene = layout.scene.clone();
    hands
        .iter()
        .enumerate()
        .map(|(k, hand)| {
            scene.update(hand);
            Frame {
                timestamp: k as f64 / rate_hz,
                objects: scene.pooled(),
                hand: *hand,
            }
        })
        .collect()
}

fn demo_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn build(spec: &SynthTaskSpec, frames: Vec<Frame>, source: Source, frame: FrameOfReference) -> Result<Trajectory, DemoError> {
    let mut t = Trajectory::new(frames, source, frame, spec.task.name(), spec.prompts.clone())
        .map_err(|e| DemoError::GenerationFailed(e.to_string()))?;
    t.rate_hz = spec.rate_hz;
    Ok(t.quantized())
}

/// Generates one in-scene and `count − 1` in-the-wild demonstrations. The
/// result is a pure function of `(spec, count, seed)`.
pub fn synth_generate(spec: &SynthTaskSpec, count: usize, seed: u64) -> Result<Dataset, DemoError> {
    if count < 1 {
        return Err(DemoError::InvalidCount("count must be at least 1".into()));
    }
    spec.check()?;
    let rest = spec.hand.open_pose();

    let mut rng = demo_rng(seed, 0);
    let base = spec.workspace.sample(&mut rng);
    let layout = sample_layout(spec, base, &mut rng);
    let hands = expert_hands(spec, &layout, &rest, &mut rng);
    let in_scene = build(spec, play(&layout, &hands, spec.rate_hz), Source::InScene, FrameOfReference::RobotBase)?;

    let mut in_the_wild = Vec::with_capacity(count - 1);
    let mut ground_truth = Vec::with_capacity(count - 1);
    for index in 1..count {
        let mut rng = demo_rng(seed, index);
        let h = uniform(&mut rng, spec.height_range[0], spec.height_range[1]);
        let mut base = spec.workspace.sample(&mut rng);
        base.z = h;
        let layout = sample_layout(spec, base, &mut rng);
        let s = spec.start_jitter;
        let jitter = Vec3::from(std::array::from_fn(|_| uniform(&mut rng, -s, s)));
        let start = rest.translated(&(jitter + Vec3::new(0.0, 0.0, h)));
        let hands = expert_hands(spec, &layout, &start, &mut rng);
        let yaw = uniform(&mut rng, -std::f64::consts::PI, std::f64::consts::PI);
        let r = spec.world_offset_range;
        let offset = [uniform(&mut rng, -r, r), uniform(&mut rng, -r, r), -spec.table_depth];
        let truth = WildGroundTruth {
            yaw,
            offset,
            surface_height: h,
        };
        let local = play(&layout, &hands, spec.rate_hz);
        let world = world_frames(&local, &truth.world_from_local());
        in_the_wild.push(build(spec, world, Source::InTheWild, FrameOfReference::WorldGravityAligned)?);
        ground_truth.push(truth);
    }

    Ok(Dataset {
        in_scene,
        in_the_wild,
        n_points: spec.n_points,
        metadata: DatasetMetadata {
            seed,
            generator_version: GENERATOR_VERSION.to_string(),
            task: Some(spec.clone()),
            ground_truth,
        },
    })
}

fn world_frames(local: &[Frame], t: &RigidTransform) -> Vec<Frame> {
    local
        .iter()
        .map(|f| Frame {
            timestamp: f.timestamp,
            objects: f.objects.transformed(t),
            hand: f.hand.transformed(t),
        })
        .collect()
}
