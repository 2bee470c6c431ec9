//! Kinematic interaction rules shared by the scripted generator and the
//! rollout simulator: grasp attachment, release, and button latching.

use serde::{Deserialize, Serialize};

use super::{HandPose, ObjectPoints};
use crate::geom3d::{centroid, Vec3};

/// Thumb-to-centroid distance within which a grasping hand picks an object up.
pub const ATTACH_DISTANCE: f64 = 0.04;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterKind {
    /// Can be picked up and carried.
    Graspable,
    /// Never moves.
    Fixed,
    /// Moves down along -z when a fingertip pushes its top, and stays there.
    Button,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub kind: ClusterKind,
    pub points: Vec<Vec3>,
}

impl Cluster {
    pub fn centroid(&self) -> Vec3 {
        centroid(&self.points)
    }

    pub fn translate(&mut self, d: &Vec3) {
        for p in &mut self.points {
            *p += d;
        }
    }

    fn min_z(&self) -> f64 {
        self.points.iter().map(|p| p.z).fold(f64::INFINITY, f64::min)
    }
}

/// A grasped object: which cluster and its centroid offset from the thumb.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    pub cluster: usize,
    pub offset: Vec3,
}

/// Button geometry and its latched displacement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ButtonState {
    pub cluster: usize,
    /// Index into that cluster of the point on the top face centre.
    pub designated: usize,
    /// Top face height before any press.
    pub rest_top: f64,
    /// Half-width of the pressable footprint around the designated point.
    pub half_width: f64,
    pub travel: f64,
    /// Displacement so far along -z, never decreasing.
    pub displacement: f64,
}

/// Rigid point clusters on a table at `surface_z`, in one reference frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneState {
    pub clusters: Vec<Cluster>,
    pub surface_z: f64,
    pub attached: Option<Attachment>,
    pub button: Option<ButtonState>,
}

impl SceneState {
    pub fn new(clusters: Vec<Cluster>, surface_z: f64) -> Self {
        Self {
            clusters,
            surface_z,
            attached: None,
            button: None,
        }
    }

    pub fn with_button(mut self, button: ButtonState) -> Self {
        self.button = Some(button);
        self
    }

    pub fn n_points(&self) -> usize {
        self.clusters.iter().map(|c| c.points.len()).sum()
    }

    /// All cluster points concatenated in cluster order.
    pub fn pooled(&self) -> ObjectPoints {
        ObjectPoints(self.clusters.iter().flat_map(|c| c.points.iter().copied()).collect())
    }

    /// The button's designated point, if the scene has a button.
    pub fn designated_point(&self) -> Option<Vec3> {
        self.button.map(|b| self.clusters[b.cluster].points[b.designated])
    }

    /// Advances the interaction state to a new hand pose.
    pub fn update(&mut self, hand: &HandPose) {
        let thumb = hand.thumb();
        let grasping = hand.is_grasping();
        match self.attached {
            Some(a) if !grasping => {
                let cluster = &mut self.clusters[a.cluster];
                let drop = self.surface_z - cluster.min_z();
                cluster.translate(&Vec3::new(0.0, 0.0, drop));
                self.attached = None;
            }
            Some(a) => {
                let cluster = &mut self.clusters[a.cluster];
                let shift = thumb + a.offset - cluster.centroid();
                cluster.translate(&shift);
            }
            None if grasping => {
                let nearest = self
                    .clusters
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.kind == ClusterKind::Graspable)
                    .map(|(i, c)| (i, (c.centroid() - thumb).norm()))
                    .filter(|(_, d)| *d < ATTACH_DISTANCE)
                    .min_by(|a, b| a.1.total_cmp(&b.1));
                if let Some((i, _)) = nearest {
                    self.attached = Some(Attachment {
                        cluster: i,
                        offset: self.clusters[i].centroid() - thumb,
                    });
                }
            }
            None => {}
        }
        self.press(hand);
    }

    fn press(&mut self, hand: &HandPose) {
        let Some(mut b) = self.button else { return };
        let top = self.clusters[b.cluster].points[b.designated];
        let lowest = hand
            .fingertips
            .iter()
            .filter(|p| (p.x - top.x).abs() <= b.half_width && (p.y - top.y).abs() <= b.half_width)
            .map(|p| p.z)
            .fold(f64::INFINITY, f64::min);
        let wanted = (b.rest_top - lowest).clamp(0.0, b.travel);
        if wanted > b.displacement {
            let step = wanted - b.displacement;
            self.clusters[b.cluster].translate(&Vec3::new(0.0, 0.0, -step));
            b.displacement = wanted;
            self.button = Some(b);
        }
    }
}
