//! Closed-loop kinematic deployment: a policy drives the reference arm–hand
//! chain through IK against a synthetic scene, one 10 Hz tick at a time.

use std::path::{Path, PathBuf};

use ndarray::{Array3, ArrayView3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demos::scene::{ClusterKind, SceneState};
use crate::demos::synth::{expert_hands, sample_layout, TaskLayout};
use crate::demos::{
    save, DemoError, Frame, FrameOfReference, HandPose, Source, SynthTaskSpec, TaskKind, Trajectory, WorkspaceBox,
    FINGERTIPS,
};
use crate::geom3d::Vec3;
use crate::kin::{grasp_adjust, ik, IkOptions, JointState, KinError, KinematicChain};
use crate::vnpolicy::{PolicyError, PolicyModel};

/// IK residual (RMS, meters) above which an episode is aborted.
pub const IK_DIVERGENCE: f64 = 0.05;
pub const DEFAULT_EXEC_PREFIX: usize = 10;
pub const TICK_HZ: f64 = 10.0;

/// Stream offset separating episode generators from dataset generators.
const EPISODE_STREAM: u64 = 1 << 32;

#[derive(Debug, thiserror::Error)]
pub enum RolloutError {
    #[error("IKDiverged: residual {residual:.4} m at step {step}")]
    IkDiverged { step: usize, residual: f64 },
    #[error("InvalidTaskSpec: {0}")]
    InvalidSpec(String),
    #[error("PolicyMismatch: {0}")]
    PolicyMismatch(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Kinematics(#[from] KinError),
    #[error(transparent)]
    Demo(#[from] DemoError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuccessTolerances {
    /// Reach: thumb to object centroid.
    pub reach: f64,
    /// Pick-place: object centroid to goal.
    pub place: f64,
    /// Press: minimum downward displacement of the designated point.
    pub press: f64,
}

impl Default for SuccessTolerances {
    fn default() -> Self {
        Self {
            reach: 0.03,
            place: 0.05,
            press: 0.02,
        }
    }
}

/// Episode distribution and limits for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutTaskSpec {
    pub task: TaskKind,
    pub workspace: WorkspaceBox,
    /// Table height range relative to the workspace box.
    pub height_range: [f64; 2],
    pub max_steps: usize,
    pub tolerances: SuccessTolerances,
    pub n_points: usize,
    /// Predicted frames executed before re-planning.
    pub exec_prefix: usize,
}

impl Default for RolloutTaskSpec {
    fn default() -> Self {
        Self::desk(TaskKind::Reach)
    }
}

impl RolloutTaskSpec {
    pub fn desk(task: TaskKind) -> Self {
        let max_steps = match task {
            TaskKind::Reach => 60,
            TaskKind::PickPlace => 120,
            TaskKind::Press => 80,
        };
        Self {
            task,
            workspace: WorkspaceBox::default(),
            height_range: [-0.05, 0.05],
            max_steps,
            tolerances: SuccessTolerances::default(),
            n_points: 32,
            exec_prefix: DEFAULT_EXEC_PREFIX,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, RolloutError> {
        let spec: Self = serde_json::from_str(text)?;
        spec.check()?;
        Ok(spec)
    }

    pub fn check(&self) -> Result<(), RolloutError> {
        self.synth_spec().check()?;
        if self.max_steps == 0 || self.exec_prefix == 0 {
            return Err(RolloutError::InvalidSpec("max_steps and exec_prefix must be positive".into()));
        }
        Ok(())
    }

    /// Generator settings used to lay out episodes and script the expert.
    pub fn synth_spec(&self) -> SynthTaskSpec {
        SynthTaskSpec {
            workspace: self.workspace,
            height_range: self.height_range,
            n_points: self.n_points,
            ..SynthTaskSpec::desk(self.task)
        }
    }
}

/// What a policy sees at one planning tick.
#[derive(Debug, Clone)]
pub struct Observation<'a> {
    /// Executed frames so far.
    pub tick: usize,
    /// `T_o × 5 × 3`, oldest first.
    pub fingertips: ArrayView3<'a, f64>,
    /// `T_o × N × 3`, oldest first.
    pub objects: ArrayView3<'a, f64>,
    /// The scripted expert for this episode, frame 0 at rest. Only oracle
    /// policies look at it.
    pub reference: &'a [HandPose],
}

pub trait Policy: Sync {
    fn history_len(&self) -> usize;
    /// Number of future frames each prediction covers.
    fn horizon(&self) -> usize;
    fn predict(&self, obs: &Observation) -> Result<Vec<HandPose>, RolloutError>;
}

impl Policy for PolicyModel {
    fn history_len(&self) -> usize {
        self.config().T_o
    }

    fn horizon(&self) -> usize {
        self.config().T_p
    }

    fn predict(&self, obs: &Observation) -> Result<Vec<HandPose>, RolloutError> {
        let out = PolicyModel::predict(self, obs.fingertips, obs.objects)?;
        Ok((0..out.dim().0)
            .map(|t| HandPose::new(std::array::from_fn(|i| Vec3::new(out[(t, i, 0)], out[(t, i, 1)], out[(t, i, 2)]))))
            .collect())
    }
}

/// Predicts the current fingertips for every future frame.
#[derive(Debug, Clone, Copy)]
pub struct ZeroMotionPolicy {
    pub history: usize,
    pub horizon: usize,
}

impl Policy for ZeroMotionPolicy {
    fn history_len(&self) -> usize {
        self.history
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn predict(&self, obs: &Observation) -> Result<Vec<HandPose>, RolloutError> {
        let last = obs.fingertips.dim().0 - 1;
        let hand = HandPose::new(std::array::from_fn(|i| {
            Vec3::new(obs.fingertips[(last, i, 0)], obs.fingertips[(last, i, 1)], obs.fingertips[(last, i, 2)])
        }));
        Ok(vec![hand; self.horizon])
    }
}

/// Replays the episode's scripted expert, ignoring observations.
#[derive(Debug, Clone, Copy)]
pub struct ReplayPolicy {
    pub history: usize,
    pub horizon: usize,
}

impl Policy for ReplayPolicy {
    fn history_len(&self) -> usize {
        self.history
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn predict(&self, obs: &Observation) -> Result<Vec<HandPose>, RolloutError> {
        let last = obs.reference.len() - 1;
        Ok((1..=self.horizon).map(|k| obs.reference[(obs.tick + k).min(last)]).collect())
    }
}

/// One episode's scene plus everything needed to score it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimScene {
    pub task: TaskKind,
    pub state: SceneState,
    pub goal: Option<Vec3>,
    pub reference: Vec<HandPose>,
}

impl SimScene {
    /// Scene for episode `episode` of `spec` under `seed`; the robot starts
    /// at `rest`.
    pub fn sample(spec: &RolloutTaskSpec, seed: u64, episode: usize, rest: &HandPose) -> Self {
        let synth = spec.synth_spec();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(EPISODE_STREAM + episode as u64);
        let mut base = spec.workspace.sample(&mut rng);
        let [lo, hi] = spec.height_range;
        base.z += if hi > lo { lo + (hi - lo) * rand::Rng::random::<f64>(&mut rng) } else { lo };
        let layout: TaskLayout = sample_layout(&synth, base, &mut rng);
        let reference = expert_hands(&synth, &layout, rest, &mut rng);
        Self {
            task: spec.task,
            state: layout.scene,
            goal: layout.goal,
            reference,
        }
    }

    pub fn is_success(&self, hand: &HandPose, tol: &SuccessTolerances) -> bool {
        match self.task {
            TaskKind::Reach => self
                .state
                .clusters
                .first()
                .is_some_and(|c| (hand.thumb() - c.centroid()).norm() <= tol.reach),
            TaskKind::PickPlace => {
                let Some(goal) = self.goal else { return false };
                self.state
                    .clusters
                    .iter()
                    .find(|c| c.kind == ClusterKind::Graspable)
                    .is_some_and(|c| (c.centroid() - goal).norm() <= tol.place)
            }
            TaskKind::Press => self.state.button.is_some_and(|b| b.displacement >= tol.press),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutReport {
    pub episode: usize,
    pub success: bool,
    pub steps: usize,
    /// RMS fingertip distance between the final executed hand and the
    /// expert reference's final frame.
    pub final_fingertip_rms: f64,
    pub ik_residuals: Vec<f64>,
    /// Why the episode stopped early without success, if it did.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub task: TaskKind,
    pub seed: u64,
    pub episodes: usize,
    pub success_rate: f64,
    pub reports: Vec<RolloutReport>,
}

/// Settings shared by every episode of a run.
#[derive(Debug, Clone)]
pub struct RolloutOptions {
    pub chain: KinematicChain,
    pub ik: IkOptions,
    /// Where per-episode traces go, if anywhere.
    pub trace_dir: Option<PathBuf>,
}

impl Default for RolloutOptions {
    fn default() -> Self {
        Self {
            chain: KinematicChain::reference(),
            ik: IkOptions::default(),
            trace_dir: None,
        }
    }
}

/// Sliding window of executed frames with its oldest entry first.
struct History {
    fingertips: Vec<HandPose>,
    objects: Vec<Vec<Vec3>>,
    len: usize,
}

impl History {
    fn warm(len: usize, hand: &HandPose, objects: Vec<Vec3>) -> Self {
        Self {
            fingertips: vec![*hand; len],
            objects: vec![objects; len],
            len,
        }
    }

    fn push(&mut self, hand: &HandPose, objects: Vec<Vec3>) {
        self.fingertips.remove(0);
        self.objects.remove(0);
        self.fingertips.push(*hand);
        self.objects.push(objects);
    }

    fn arrays(&self) -> (Array3<f64>, Array3<f64>) {
        let n = self.objects[0].len();
        let f = Array3::from_shape_fn((self.len, FINGERTIPS, 3), |(t, i, x)| self.fingertips[t].fingertips[i][x]);
        let o = Array3::from_shape_fn((self.len, n, 3), |(t, j, x)| self.objects[t][j][x]);
        (f, o)
    }
}

/// State of a running episode.
pub struct Episode<'a> {
    pub scene: SimScene,
    pub joints: JointState,
    pub tick: usize,
    pub frames: Vec<Frame>,
    pub ik_residuals: Vec<f64>,
    opts: &'a RolloutOptions,
    history: History,
}

impl<'a> Episode<'a> {
    pub fn new(scene: SimScene, history_len: usize, opts: &'a RolloutOptions) -> Self {
        let joints = opts.chain.home();
        let hand = opts.chain.fk(&joints);
        let objects = scene.state.pooled().0;
        let frames = vec![Frame {
            timestamp: 0.0,
            objects: scene.state.pooled(),
            hand,
        }];
        Self {
            history: History::warm(history_len, &hand, objects),
            scene,
            joints,
            tick: 0,
            frames,
            ik_residuals: Vec::new(),
            opts,
        }
    }

    pub fn hand(&self) -> HandPose {
        self.frames.last().expect("episode has a first frame").hand
    }

    /// Plans once and executes up to `exec_prefix` predicted frames, stopping
    /// early at success or `max_steps`. Returns whether the task succeeded.
    pub fn step(&mut self, policy: &dyn Policy, exec_prefix: usize, spec: &RolloutTaskSpec) -> Result<bool, RolloutError> {
        let (f, o) = self.history.arrays();
        let plan = policy.predict(&Observation {
            tick: self.tick,
            fingertips: f.view(),
            objects: o.view(),
            reference: &self.scene.reference,
        })?;
        for target in plan.iter().take(exec_prefix) {
            if self.tick >= spec.max_steps {
                break;
            }
            let target = grasp_adjust(target);
            let (joints, report) = ik(&self.opts.chain, &target, &self.joints, &self.opts.ik);
            self.ik_residuals.push(report.residual);
            if report.residual > IK_DIVERGENCE {
                return Err(RolloutError::IkDiverged {
                    step: self.tick,
                    residual: report.residual,
                });
            }
            self.opts.chain.check_limits(&joints)?;
            self.joints = joints;
            let hand = self.opts.chain.fk(&joints);
            self.scene.state.update(&hand);
            self.tick += 1;
            let objects = self.scene.state.pooled();
            self.history.push(&hand, objects.0.clone());
            self.frames.push(Frame {
                timestamp: self.tick as f64 / TICK_HZ,
                objects,
                hand,
            });
            if self.scene.is_success(&hand, &spec.tolerances) {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

/// Runs one episode to success, `max_steps` or abort.
pub fn run_episode(
    policy: &dyn Policy,
    spec: &RolloutTaskSpec,
    seed: u64,
    episode: usize,
    opts: &RolloutOptions,
) -> Result<RolloutReport, RolloutError> {
    let rest = opts.chain.fk(&opts.chain.home());
    let scene = SimScene::sample(spec, seed, episode, &rest);
    if scene.state.n_points() != spec.n_points {
        return Err(RolloutError::InvalidSpec("scene point count differs from n_points".into()));
    }
    let mut ep = Episode::new(scene, policy.history_len(), opts);
    let mut success = false;
    let mut aborted = None;
    while ep.tick < spec.max_steps {
        match ep.step(policy, spec.exec_prefix, spec) {
            Ok(true) => {
                success = true;
                break;
            }
            Ok(false) => {}
            Err(e @ RolloutError::IkDiverged { .. }) => {
                aborted = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let final_hand = ep.hand();
    let reference_end = ep.scene.reference.last().expect("expert has frames");
    let final_fingertip_rms = (final_hand
        .fingertips
        .iter()
        .zip(&reference_end.fingertips)
        .map(|(a, b)| (a - b).norm_squared())
        .sum::<f64>()
        / FINGERTIPS as f64)
        .sqrt();

    let mut report = RolloutReport {
        episode,
        success,
        steps: ep.tick,
        final_fingertip_rms,
        ik_residuals: ep.ik_residuals,
        aborted,
        trace_path: None,
    };
    if let Some(dir) = &opts.trace_dir {
        report.trace_path = Some(write_trace(dir, spec, ep.frames, &report)?);
    }
    Ok(report)
}

fn write_trace(dir: &Path, spec: &RolloutTaskSpec, frames: Vec<Frame>, report: &RolloutReport) -> Result<String, RolloutError> {
    std::fs::create_dir_all(dir)?;
    let mut traj = Trajectory::new(frames, Source::InScene, FrameOfReference::RobotBase, spec.task.name(), vec![])?;
    traj.rate_hz = TICK_HZ;
    let stem = format!("episode_{:03}", report.episode);
    let path = dir.join(format!("{stem}.aina"));
    save(&traj, &path)?;
    let mut with_path = report.clone();
    with_path.trace_path = Some(format!("{stem}.aina"));
    std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&with_path)?)?;
    Ok(format!("{stem}.aina"))
}

/// Runs `episodes` independently randomized episodes. Episodes run in
/// parallel; the report depends only on the policy, spec and seed.
pub fn evaluate(
    policy: &dyn Policy,
    spec: &RolloutTaskSpec,
    episodes: usize,
    seed: u64,
    opts: &RolloutOptions,
) -> Result<EvaluationReport, RolloutError> {
    spec.check()?;
    if episodes == 0 {
        return Err(RolloutError::InvalidSpec("episodes must be at least 1".into()));
    }
    let reports = (0..episodes)
        .into_par_iter()
        .map(|e| run_episode(policy, spec, seed, e, opts))
        .collect::<Result<Vec<_>, _>>()?;
    let successes = reports.iter().filter(|r| r.success).count();
    Ok(EvaluationReport {
        task: spec.task,
        seed,
        episodes,
        success_rate: successes as f64 / episodes as f64,
        reports,
    })
}

/// Checks that a learned model can run against `spec`.
pub fn check_model(model: &PolicyModel, spec: &RolloutTaskSpec) -> Result<(), RolloutError> {
    if model.config().N != spec.n_points {
        return Err(RolloutError::PolicyMismatch(format!(
            "model expects {} object points, task spec has {}",
            model.config().N,
            spec.n_points
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests;
