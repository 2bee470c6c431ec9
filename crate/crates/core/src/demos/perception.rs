//! Turning externally produced perception outputs (2D tracks, depth or
//! disparity grids, hand keypoints, camera poses) into a [`Trajectory`].
//!
//! On disk a bundle is a directory:
//!
//! ```text
//! meta.json              optional: rate_hz, start_time, task_name, prompts
//! tracks.csv             frame,id,u,v,visible
//! depth/000000.json      grid header: width, height, fx, fy, cx, cy, kind, baseline
//! depth/000000.f32       width*height little-endian f32, row-major
//! poses/000000.json      camera-to-reference 4x4, row-major
//! hands/000000.json      {"fingertips": [[x,y,z]; 5]} or {"view_a": [[u,v]; 5], "view_b": [[u,v]; 5]}
//! hand_cameras.json      {"view_a": camera, "view_b": camera}, needed for two-view hands
//! ```
//!
//! Everything per frame is expressed in that frame's camera coordinates; the
//! camera pose carries it into the reference frame.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DemoError, Frame, FrameOfReference, HandPose, ObjectPoints, Source, Trajectory, DEFAULT_RATE_HZ, FINGERTIPS};
use crate::geom3d::{disparity_to_depth, triangulate, unproject, PinholeCamera, RigidTransform, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IngestMode {
    StereoDisparity,
    DirectDepth,
}

impl FromStr for IngestMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stereo_disparity" => Ok(Self::StereoDisparity),
            "direct_depth" => Ok(Self::DirectDepth),
            other => Err(format!("unknown ingest mode {other:?} (stereo_disparity|direct_depth)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Depth,
    Disparity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridHeader {
    width: usize,
    height: usize,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    kind: GridKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    baseline: Option<f64>,
}

/// A per-frame depth or disparity image for the left camera. Cells with a
/// non-positive or non-finite value carry no measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthGrid {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub kind: GridKind,
    /// Stereo baseline in meters; required for disparity grids.
    pub baseline: Option<f64>,
    pub values: Vec<f32>,
}

impl DepthGrid {
    pub fn empty(width: usize, height: usize, camera: &PinholeCamera, kind: GridKind, baseline: Option<f64>) -> Self {
        Self {
            width,
            height,
            fx: camera.fx,
            fy: camera.fy,
            cx: camera.cx,
            cy: camera.cy,
            kind,
            baseline,
            values: vec![0.0; width * height],
        }
    }

    /// Intrinsics as a camera at the identity pose.
    pub fn camera(&self) -> Result<PinholeCamera, DemoError> {
        Ok(PinholeCamera::new(self.fx, self.fy, self.cx, self.cy, RigidTransform::identity())?)
    }

    fn cell(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    /// Depth in meters stored at one cell, converting disparity if needed.
    fn cell_depth(&self, x: usize, y: usize) -> Result<Option<f64>, DemoError> {
        let raw = self.cell(x, y) as f64;
        if !(raw > 0.0) || !raw.is_finite() {
            return Ok(None);
        }
        match self.kind {
            GridKind::Depth => Ok(Some(raw)),
            GridKind::Disparity => {
                let baseline = self
                    .baseline
                    .ok_or_else(|| DemoError::MissingDepthHeader("disparity grid without baseline".into()))?;
                Ok(Some(disparity_to_depth(self.fx, baseline, raw)?))
            }
        }
    }

    /// Bilinear depth at a sub-pixel location, with pixel centres at integer
    /// coordinates. Only corners with non-zero weight must hold a
    /// measurement. `None` when the location is off the grid or a needed
    /// corner is empty.
    pub fn depth_at(&self, u: f64, v: f64) -> Result<Option<f64>, DemoError> {
        if !(u >= 0.0 && v >= 0.0 && u <= (self.width - 1) as f64 && v <= (self.height - 1) as f64) {
            return Ok(None);
        }
        let x0 = u.floor() as usize;
        let y0 = v.floor() as usize;
        let ax = u - x0 as f64;
        let ay = v - y0 as f64;
        let mut acc = 0.0;
        for (dx, wx) in [(0, 1.0 - ax), (1, ax)] {
            for (dy, wy) in [(0, 1.0 - ay), (1, ay)] {
                let w = wx * wy;
                if w == 0.0 {
                    continue;
                }
                match self.cell_depth(x0 + dx, y0 + dy)? {
                    Some(z) => acc += w * z,
                    None => return Ok(None),
                }
            }
        }
        Ok(Some(acc))
    }

    fn header(&self) -> GridHeader {
        GridHeader {
            width: self.width,
            height: self.height,
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            kind: self.kind,
            baseline: self.baseline,
        }
    }
}

/// One row of `tracks.csv`: where track `id` was seen in `frame`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackObservation {
    pub frame: usize,
    pub id: u32,
    pub u: f64,
    pub v: f64,
    #[serde(with = "flag")]
    pub visible: bool,
}

/// Per-frame hand input: either 3D fingertips in the camera frame, or
/// fingertip pixels in the two hand cameras.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HandObservation {
    Fingertips {
        fingertips: [[f64; 3]; FINGERTIPS],
    },
    TwoView {
        view_a: [[f64; 2]; FINGERTIPS],
        view_b: [[f64; 2]; FINGERTIPS],
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandCameras {
    pub view_a: PinholeCamera,
    pub view_b: PinholeCamera,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BundleMeta {
    pub rate_hz: f64,
    pub start_time: f64,
    pub task_name: String,
    pub prompts: Vec<String>,
}

impl Default for BundleMeta {
    fn default() -> Self {
        Self {
            rate_hz: DEFAULT_RATE_HZ,
            start_time: 0.0,
            task_name: String::new(),
            prompts: Vec::new(),
        }
    }
}

/// In-memory form of a perception bundle directory.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptionBundle {
    pub meta: BundleMeta,
    pub tracks: Vec<TrackObservation>,
    pub depth: Vec<DepthGrid>,
    pub poses: Vec<RigidTransform>,
    pub hands: Vec<HandObservation>,
    pub hand_cameras: Option<HandCameras>,
}

fn frame_file(dir: &Path, k: usize, ext: &str) -> std::path::PathBuf {
    dir.join(format!("{k:06}.{ext}"))
}

fn count_files(dir: &Path, ext: &str) -> Result<usize, DemoError> {
    if !dir.is_dir() {
        return Ok(0);
    }
    let mut n = 0;
    for entry in fs::read_dir(dir)? {
        if entry?.path().extension().is_some_and(|e| e == ext) {
            n += 1;
        }
    }
    Ok(n)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, DemoError> {
    let text = fs::read_to_string(path)
        .map_err(|e| DemoError::MalformedBundle(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

impl PerceptionBundle {
    pub fn frame_count(&self) -> usize {
        self.poses.len()
    }

    /// Reads a bundle directory. Channel lengths are checked by [`ingest`],
    /// except that a depth grid without its header is reported here.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, DemoError> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(DemoError::MalformedBundle(format!("{} is not a directory", dir.display())));
        }
        let meta_path = dir.join("meta.json");
        let meta = if meta_path.exists() { read_json(&meta_path)? } else { BundleMeta::default() };

        let n_poses = count_files(&dir.join("poses"), "json")?;
        let poses = (0..n_poses)
            .map(|k| {
                let m: [[f64; 4]; 4] = read_json(&frame_file(&dir.join("poses"), k, "json"))?;
                Ok(RigidTransform::from_matrix4(&m)?)
            })
            .collect::<Result<Vec<_>, DemoError>>()?;

        let depth_dir = dir.join("depth");
        let n_grids = count_files(&depth_dir, "f32")?;
        let mut depth = Vec::with_capacity(n_grids);
        for k in 0..n_grids {
            let header_path = frame_file(&depth_dir, k, "json");
            if !header_path.exists() {
                return Err(DemoError::MissingDepthHeader(header_path.display().to_string()));
            }
            let h: GridHeader = read_json(&header_path)?;
            let raw_path = frame_file(&depth_dir, k, "f32");
            let bytes = fs::read(&raw_path)
                .map_err(|e| DemoError::MalformedBundle(format!("{}: {e}", raw_path.display())))?;
            if bytes.len() != h.width * h.height * 4 {
                return Err(DemoError::MalformedBundle(format!(
                    "{}: {} bytes for a {}x{} grid",
                    raw_path.display(),
                    bytes.len(),
                    h.width,
                    h.height
                )));
            }
            let values = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            depth.push(DepthGrid {
                width: h.width,
                height: h.height,
                fx: h.fx,
                fy: h.fy,
                cx: h.cx,
                cy: h.cy,
                kind: h.kind,
                baseline: h.baseline,
                values,
            });
        }

        let n_hands = count_files(&dir.join("hands"), "json")?;
        let hands = (0..n_hands)
            .map(|k| read_json(&frame_file(&dir.join("hands"), k, "json")))
            .collect::<Result<Vec<HandObservation>, _>>()?;

        let cams_path = dir.join("hand_cameras.json");
        let hand_cameras = if cams_path.exists() { Some(read_json(&cams_path)?) } else { None };

        let tracks_path = dir.join("tracks.csv");
        let mut reader = csv::Reader::from_path(&tracks_path)
            .map_err(|e| DemoError::MalformedBundle(format!("{}: {e}", tracks_path.display())))?;
        let tracks = reader.deserialize().collect::<Result<Vec<TrackObservation>, _>>()?;

        Ok(Self {
            meta,
            tracks,
            depth,
            poses,
            hands,
            hand_cameras,
        })
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), DemoError> {
        let dir = dir.as_ref();
        for sub in ["depth", "poses", "hands"] {
            fs::create_dir_all(dir.join(sub))?;
        }
        fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&self.meta)?)?;
        for (k, pose) in self.poses.iter().enumerate() {
            fs::write(frame_file(&dir.join("poses"), k, "json"), serde_json::to_string(&pose.to_matrix4())?)?;
        }
        for (k, grid) in self.depth.iter().enumerate() {
            fs::write(frame_file(&dir.join("depth"), k, "json"), serde_json::to_string_pretty(&grid.header())?)?;
            let bytes: Vec<u8> = grid.values.iter().flat_map(|v| v.to_le_bytes()).collect();
            fs::write(frame_file(&dir.join("depth"), k, "f32"), bytes)?;
        }
        for (k, hand) in self.hands.iter().enumerate() {
            fs::write(frame_file(&dir.join("hands"), k, "json"), serde_json::to_string(hand)?)?;
        }
        if let Some(cams) = &self.hand_cameras {
            fs::write(dir.join("hand_cameras.json"), serde_json::to_string_pretty(cams)?)?;
        }
        let mut writer = csv::Writer::from_path(dir.join("tracks.csv"))?;
        for t in &self.tracks {
            writer.serialize(t)?;
        }
        writer.flush()?;
        Ok(())
    }
}

fn mismatch(what: &str, found: usize, frames: usize) -> DemoError {
    DemoError::FrameCountMismatch(format!("{found} {what} for {frames} camera poses"))
}

/// Builds a trajectory in `frame_of_reference` from a bundle. Robot-base
/// bundles become in-scene demonstrations, world-frame bundles in-the-wild
/// ones.
///
/// Track points are ordered by ascending id. A point that is not visible
/// keeps its last visible position; before its first sighting it takes the
/// position of that first sighting.
pub fn ingest(
    bundle: &PerceptionBundle,
    mode: IngestMode,
    frame_of_reference: FrameOfReference,
) -> Result<Trajectory, DemoError> {
    let frames = bundle.frame_count();
    if bundle.depth.len() != frames {
        return Err(mismatch("depth grids", bundle.depth.len(), frames));
    }
    if bundle.hands.len() != frames {
        return Err(mismatch("hand observations", bundle.hands.len(), frames));
    }
    let track_frames = bundle.tracks.iter().map(|t| t.frame + 1).max().unwrap_or(0);
    if track_frames != frames {
        return Err(mismatch("track frames", track_frames, frames));
    }
    if frames < 2 {
        return Err(DemoError::InvalidTrajectory(format!(
            "bundle has {frames} frame(s), at least 2 are required"
        )));
    }
    let wanted = match mode {
        IngestMode::StereoDisparity => GridKind::Disparity,
        IngestMode::DirectDepth => GridKind::Depth,
    };
    if let Some(k) = bundle.depth.iter().position(|g| g.kind != wanted) {
        return Err(DemoError::MalformedBundle(format!(
            "frame {k} holds a {:?} grid but mode {mode:?} was requested",
            bundle.depth[k].kind
        )));
    }

    let ids: BTreeSet<u32> = bundle.tracks.iter().map(|t| t.id).collect();
    let column: BTreeMap<u32, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let mut table: Vec<Vec<Option<TrackObservation>>> = vec![vec![None; ids.len()]; frames];
    for obs in &bundle.tracks {
        let slot = &mut table[obs.frame][column[&obs.id]];
        if slot.is_some() {
            return Err(DemoError::MalformedBundle(format!(
                "track {} listed twice in frame {}",
                obs.id, obs.frame
            )));
        }
        *slot = Some(*obs);
    }

    // Visible positions, lifted into the reference frame.
    let mut lifted: Vec<Vec<Option<Vec3>>> = vec![vec![None; ids.len()]; frames];
    for k in 0..frames {
        let grid = &bundle.depth[k];
        let camera = grid.camera()?;
        for (j, obs) in table[k].iter().enumerate() {
            let Some(obs) = obs.filter(|o| o.visible) else { continue };
            let z = grid.depth_at(obs.u, obs.v)?.ok_or(DemoError::MissingDepth {
                frame: k,
                track: obs.id as usize,
                u: obs.u,
                v: obs.v,
            })?;
            let p = unproject(&camera, (obs.u, obs.v), z)?;
            lifted[k][j] = Some(bundle.poses[k].apply(&p));
        }
    }
    let mut last: Vec<Vec3> = Vec::with_capacity(ids.len());
    for (j, id) in ids.iter().enumerate() {
        let first = (0..frames)
            .find_map(|k| lifted[k][j])
            .ok_or(DemoError::AllPointsInvisible(*id as usize))?;
        last.push(first);
    }

    let mut out = Vec::with_capacity(frames);
    for k in 0..frames {
        for j in 0..ids.len() {
            if let Some(p) = lifted[k][j] {
                last[j] = p;
            }
        }
        let hand = lift_hand(bundle, k)?;
        out.push(Frame {
            timestamp: bundle.meta.start_time + k as f64 / bundle.meta.rate_hz,
            objects: ObjectPoints(last.clone()),
            hand,
        });
    }
    let source = match frame_of_reference {
        FrameOfReference::RobotBase => Source::InScene,
        FrameOfReference::WorldGravityAligned => Source::InTheWild,
    };
    let mut t = Trajectory::new(out, source, frame_of_reference, bundle.meta.task_name.clone(), bundle.meta.prompts.clone())?;
    t.rate_hz = bundle.meta.rate_hz;
    Ok(t)
}

fn lift_hand(bundle: &PerceptionBundle, k: usize) -> Result<HandPose, DemoError> {
    let pose = &bundle.poses[k];
    match &bundle.hands[k] {
        HandObservation::Fingertips { fingertips } => Ok(HandPose::from_arrays(fingertips).transformed(pose)),
        HandObservation::TwoView { view_a, view_b } => {
            let cams = bundle
                .hand_cameras
                .ok_or_else(|| DemoError::MalformedBundle("two-view hands without hand_cameras.json".into()))?;
            let cam_a = PinholeCamera {
                pose: pose.compose(&cams.view_a.pose),
                ..cams.view_a
            };
            let cam_b = PinholeCamera {
                pose: pose.compose(&cams.view_b.pose),
                ..cams.view_b
            };
            let mut tips = [Vec3::zeros(); FINGERTIPS];
            for i in 0..FINGERTIPS {
                let a = (view_a[i][0], view_a[i][1]);
                let b = (view_b[i][0], view_b[i][1]);
                tips[i] = triangulate(&cam_a, &cam_b, a, b)?;
            }
            Ok(HandPose::new(tips))
        }
    }
}

/// How [`render_bundle`] synthesizes perception outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderOptions {
    pub width: usize,
    pub height: usize,
    pub camera: PinholeCamera,
    /// Added to the camera position once per frame.
    pub drift_per_frame: Vec3,
    pub kind: GridKind,
    pub baseline: f64,
    /// Render hands as two-view pixels instead of 3D fingertips.
    pub two_view_hands: bool,
    /// Offset of the second hand camera along the first one's +x axis.
    pub hand_baseline: f64,
    /// (frame, point index) pairs reported as not visible.
    pub occluded: Vec<(usize, usize)>,
}

impl Default for RenderOptions {
    fn default() -> Self {
        let pose = RigidTransform::new(
            nalgebra::Matrix3::new(0.0, -1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, -1.0),
            Vec3::new(0.5, 0.0, 1.0),
        )
        .expect("a proper rotation");
        Self {
            width: 640,
            height: 480,
            camera: PinholeCamera {
                fx: 800.0,
                fy: 800.0,
                cx: 320.0,
                cy: 240.0,
                pose,
            },
            drift_per_frame: Vec3::zeros(),
            kind: GridKind::Depth,
            baseline: 0.1,
            two_view_hands: false,
            hand_baseline: 0.12,
            occluded: Vec::new(),
        }
    }
}

/// Renders a trajectory into the bundle an ideal perception stack would
/// produce. Each visible point is stamped as a 2x2 block of constant depth
/// (or disparity), so bilinear lookup returns it exactly up to `f32`
/// rounding. Points whose blocks overlap with different values, or that
/// fall outside the image, are a [`DemoError::RenderConflict`].
pub fn render_bundle(trajectory: &Trajectory, opts: &RenderOptions) -> Result<PerceptionBundle, DemoError> {
    opts.camera.validate()?;
    let occluded: BTreeSet<(usize, usize)> = opts.occluded.iter().copied().collect();
    let mut bundle = PerceptionBundle {
        meta: BundleMeta {
            rate_hz: trajectory.rate_hz,
            start_time: trajectory.frames.first().map_or(0.0, |f| f.timestamp),
            task_name: trajectory.task_name.clone(),
            prompts: trajectory.prompts.clone(),
        },
        tracks: Vec::new(),
        depth: Vec::new(),
        poses: Vec::new(),
        hands: Vec::new(),
        hand_cameras: None,
    };
    let cam_b_offset = RigidTransform::from_translation(Vec3::new(opts.hand_baseline, 0.0, 0.0));
    if opts.two_view_hands {
        let intr = PinholeCamera {
            pose: RigidTransform::identity(),
            ..opts.camera
        };
        bundle.hand_cameras = Some(HandCameras {
            view_a: intr,
            view_b: PinholeCamera {
                pose: cam_b_offset,
                ..intr
            },
        });
    }
    let baseline = match opts.kind {
        GridKind::Depth => None,
        GridKind::Disparity => Some(opts.baseline),
    };

    for (k, frame) in trajectory.frames.iter().enumerate() {
        let pose = RigidTransform::from_translation(opts.drift_per_frame * k as f64).compose(&opts.camera.pose);
        let cam = PinholeCamera { pose, ..opts.camera };
        let to_cam = pose.inverse();
        let mut grid = DepthGrid::empty(opts.width, opts.height, &cam, opts.kind, baseline);
        for (j, p) in frame.objects.iter().enumerate() {
            let pc = to_cam.apply(p);
            let (u, v) = cam.project_camera(&pc)?;
            let visible = !occluded.contains(&(k, j));
            bundle.tracks.push(TrackObservation {
                frame: k,
                id: j as u32,
                u,
                v,
                visible,
            });
            if visible {
                let value = match opts.kind {
                    GridKind::Depth => pc.z,
                    GridKind::Disparity => cam.fx * opts.baseline / pc.z,
                };
                stamp(&mut grid, u, v, value as f32, k, j)?;
            }
        }
        bundle.depth.push(grid);
        bundle.poses.push(pose);
        let tips_cam = frame.hand.transformed(&to_cam);
        let hand = if opts.two_view_hands {
            let cam_a = PinholeCamera {
                pose: RigidTransform::identity(),
                ..opts.camera
            };
            let cam_b = PinholeCamera {
                pose: cam_b_offset,
                ..opts.camera
            };
            let mut view_a = [[0.0; 2]; FINGERTIPS];
            let mut view_b = [[0.0; 2]; FINGERTIPS];
            for i in 0..FINGERTIPS {
                let (ua, va) = cam_a.project(&tips_cam.fingertips[i])?;
                let (ub, vb) = cam_b.project(&tips_cam.fingertips[i])?;
                view_a[i] = [ua, va];
                view_b[i] = [ub, vb];
            }
            HandObservation::TwoView { view_a, view_b }
        } else {
            HandObservation::Fingertips {
                fingertips: tips_cam.to_arrays(),
            }
        };
        bundle.hands.push(hand);
    }
    Ok(bundle)
}

fn stamp(grid: &mut DepthGrid, u: f64, v: f64, value: f32, frame: usize, point: usize) -> Result<(), DemoError> {
    if !(u >= 0.0 && v >= 0.0 && u < (grid.width - 1) as f64 && v < (grid.height - 1) as f64) {
        return Err(DemoError::RenderConflict(format!(
            "frame {frame}, point {point} projects outside the image at ({u:.1}, {v:.1})"
        )));
    }
    let (x0, y0) = (u.floor() as usize, v.floor() as usize);
    for y in y0..=y0 + 1 {
        for x in x0..=x0 + 1 {
            let cell = &mut grid.values[y * grid.width + x];
            if *cell != 0.0 && *cell != value {
                return Err(DemoError::RenderConflict(format!(
                    "frame {frame}, point {point} overlaps another point at pixel ({x}, {y})"
                )));
            }
            *cell = value;
        }
    }
    Ok(())
}

mod flag {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(serde::de::Error::custom(format!("visible must be 0 or 1, got {other}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sparse_trajectory(frames: usize) -> Trajectory {
        let mut out = Vec::new();
        for k in 0..frames {
            let shift = Vec3::new(0.01 * k as f64, 0.0, 0.0);
            let objects = (0..16)
                .map(|i| {
                    let (a, b) = ((i % 4) as f64, (i / 4) as f64);
                    Vec3::new(0.35 + 0.1 * a, -0.15 + 0.1 * b, 0.02 * (a - b)) + shift
                })
                .collect();
            let hand = HandPose::new(std::array::from_fn(|f| Vec3::new(0.45, -0.06 + 0.03 * f as f64, 0.15)));
            out.push(Frame {
                timestamp: k as f64 * 0.1,
                objects: ObjectPoints(objects),
                hand,
            });
        }
        Trajectory::new(out, Source::InScene, FrameOfReference::RobotBase, "probe", vec![]).unwrap()
    }

    fn max_error(a: &Trajectory, b: &Trajectory) -> f64 {
        let mut worst = 0.0f64;
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            for (p, q) in fa.objects.iter().zip(fb.objects.iter()) {
                worst = worst.max((p - q).norm());
            }
            for (p, q) in fa.hand.fingertips.iter().zip(&fb.hand.fingertips) {
                worst = worst.max((p - q).norm());
            }
        }
        worst
    }

    #[test]
    fn depth_round_trip() {
        let t = sparse_trajectory(4);
        let bundle = render_bundle(&t, &RenderOptions::default()).unwrap();
        let back = ingest(&bundle, IngestMode::DirectDepth, FrameOfReference::RobotBase).unwrap();
        assert!(max_error(&t, &back) < 1e-6);
    }

    #[test]
    fn disparity_two_view_round_trip_with_drift() {
        let t = sparse_trajectory(3);
        let opts = RenderOptions {
            kind: GridKind::Disparity,
            two_view_hands: true,
            drift_per_frame: Vec3::new(0.0, 0.01, 0.005),
            ..RenderOptions::default()
        };
        let bundle = render_bundle(&t, &opts).unwrap();
        let back = ingest(&bundle, IngestMode::StereoDisparity, FrameOfReference::RobotBase).unwrap();
        assert!(max_error(&t, &back) < 1e-6);
    }

    #[test]
    fn occluded_points_carry_forward() {
        let t = sparse_trajectory(7);
        let opts = RenderOptions {
            occluded: vec![(3, 5), (4, 5), (5, 5), (0, 2)],
            ..RenderOptions::default()
        };
        let bundle = render_bundle(&t, &opts).unwrap();
        let back = ingest(&bundle, IngestMode::DirectDepth, FrameOfReference::RobotBase).unwrap();
        for k in 3..=5 {
            assert_eq!(back.frames[k].objects[5], back.frames[2].objects[5]);
        }
        assert!((back.frames[6].objects[5] - t.frames[6].objects[5]).norm() < 1e-6);
        assert_eq!(back.frames[0].objects[2], back.frames[1].objects[2]);
    }

    #[test]
    fn never_visible_track_is_an_error() {
        let t = sparse_trajectory(2);
        let opts = RenderOptions {
            occluded: vec![(0, 7), (1, 7)],
            ..RenderOptions::default()
        };
        let bundle = render_bundle(&t, &opts).unwrap();
        assert!(matches!(
            ingest(&bundle, IngestMode::DirectDepth, FrameOfReference::RobotBase),
            Err(DemoError::AllPointsInvisible(7))
        ));
    }

    #[test]
    fn single_frame_and_mismatched_channels_rejected() {
        let t = sparse_trajectory(3);
        let mut bundle = render_bundle(&t, &RenderOptions::default()).unwrap();
        bundle.hands.pop();
        assert!(matches!(
            ingest(&bundle, IngestMode::DirectDepth, FrameOfReference::RobotBase),
            Err(DemoError::FrameCountMismatch(_))
        ));

        let mut one = render_bundle(&t, &RenderOptions::default()).unwrap();
        one.poses.truncate(1);
        one.depth.truncate(1);
        one.hands.truncate(1);
        one.tracks.retain(|o| o.frame == 0);
        assert!(matches!(
            ingest(&one, IngestMode::DirectDepth, FrameOfReference::RobotBase),
            Err(DemoError::InvalidTrajectory(_))
        ));
    }

    #[test]
    fn track_off_the_grid_is_missing_depth() {
        let t = sparse_trajectory(2);
        let mut bundle = render_bundle(&t, &RenderOptions::default()).unwrap();
        bundle.tracks[3].u = -4.0;
        assert!(matches!(
            ingest(&bundle, IngestMode::DirectDepth, FrameOfReference::RobotBase),
            Err(DemoError::MissingDepth { frame: 0, track: 3, .. })
        ));
    }

    #[test]
    fn bilinear_uses_only_weighted_corners() {
        let cam = PinholeCamera::new(100.0, 100.0, 2.0, 2.0, RigidTransform::identity()).unwrap();
        let mut g = DepthGrid::empty(4, 4, &cam, GridKind::Depth, None);
        g.values[4 + 1] = 1.0;
        g.values[4 + 2] = 2.0;
        assert_eq!(g.depth_at(1.0, 1.0).unwrap(), Some(1.0));
        assert_eq!(g.depth_at(1.25, 1.0).unwrap(), Some(1.25));
        assert_eq!(g.depth_at(1.25, 1.5).unwrap(), None);
        assert_eq!(g.depth_at(3.5, 1.0).unwrap(), None);
    }

    #[test]
    fn bundle_directory_round_trip() {
        let t = sparse_trajectory(3);
        let opts = RenderOptions {
            kind: GridKind::Disparity,
            two_view_hands: true,
            occluded: vec![(1, 4)],
            ..RenderOptions::default()
        };
        let bundle = render_bundle(&t, &opts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        bundle.save(dir.path()).unwrap();
        let loaded = PerceptionBundle::load(dir.path()).unwrap();
        assert_eq!(loaded, bundle);

        fs::remove_file(dir.path().join("depth/000001.json")).unwrap();
        assert!(matches!(
            PerceptionBundle::load(dir.path()),
            Err(DemoError::MissingDepthHeader(_))
        ));
    }
}
