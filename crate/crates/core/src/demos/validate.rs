use std::fmt;

use serde::Serialize;

use super::{Dataset, FrameOfReference, Source, Trajectory, MAX_FINGERTIP_SPREAD};
use crate::geom3d::is_finite;

/// Which trajectory of a dataset a violation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryRef {
    InScene,
    Wild(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    TooFewFrames { frames: usize },
    NonFinite,
    NonMonotonicTimestamp,
    PointCountMismatch { expected: usize, found: usize },
    FingertipSpread { spread: f64 },
    SourceFrameMismatch { source: Source, frame: FrameOfReference },
    NotInScene,
    NotInTheWild,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub trajectory: Option<TrajectoryRef>,
    pub frame: Option<usize>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.trajectory {
            Some(TrajectoryRef::InScene) => write!(f, "in-scene ")?,
            Some(TrajectoryRef::Wild(i)) => write!(f, "wild[{i}] ")?,
            None => {}
        }
        if let Some(frame) = self.frame {
            write!(f, "frame {frame}: ")?;
        }
        write!(f, "{:?}", self.kind)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

pub(crate) fn trajectory_violations(t: &Trajectory, which: Option<TrajectoryRef>) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |frame: Option<usize>, kind| {
        out.push(Violation {
            trajectory: which,
            frame,
            kind,
        })
    };
    if t.frames.len() < 2 {
        push(None, ViolationKind::TooFewFrames { frames: t.frames.len() });
    }
    if t.source == Source::InScene && t.frame_of_reference != FrameOfReference::RobotBase {
        push(
            None,
            ViolationKind::SourceFrameMismatch {
                source: t.source,
                frame: t.frame_of_reference,
            },
        );
    }
    let n = t.n_points();
    let mut prev_time = f64::NEG_INFINITY;
    for (i, f) in t.frames.iter().enumerate() {
        if f.objects.len() != n {
            push(
                Some(i),
                ViolationKind::PointCountMismatch {
                    expected: n,
                    found: f.objects.len(),
                },
            );
        }
        let finite = f.timestamp.is_finite() && f.hand.is_finite() && f.objects.iter().all(is_finite);
        if !finite {
            push(Some(i), ViolationKind::NonFinite);
        } else {
            let spread = f.hand.max_spread();
            if spread >= MAX_FINGERTIP_SPREAD {
                push(Some(i), ViolationKind::FingertipSpread { spread });
            }
        }
        if f.timestamp.is_finite() {
            if f.timestamp <= prev_time {
                push(Some(i), ViolationKind::NonMonotonicTimestamp);
            }
            prev_time = f.timestamp;
        }
    }
    out
}

/// Checks every type invariant of a dataset and reports each violation with
/// its trajectory and frame index.
pub fn validate(dataset: &Dataset) -> ValidationReport {
    let mut violations = trajectory_violations(&dataset.in_scene, Some(TrajectoryRef::InScene));
    if dataset.in_scene.source != Source::InScene {
        violations.push(Violation {
            trajectory: Some(TrajectoryRef::InScene),
            frame: None,
            kind: ViolationKind::NotInScene,
        });
    }
    for (k, t) in dataset.in_the_wild.iter().enumerate() {
        let which = Some(TrajectoryRef::Wild(k));
        violations.extend(trajectory_violations(t, which));
        if t.source != Source::InTheWild {
            violations.push(Violation {
                trajectory: which,
                frame: None,
                kind: ViolationKind::NotInTheWild,
            });
        }
    }
    for (which, t) in std::iter::once((TrajectoryRef::InScene, &dataset.in_scene)).chain(
        dataset
            .in_the_wild
            .iter()
            .enumerate()
            .map(|(k, t)| (TrajectoryRef::Wild(k), t)),
    ) {
        if let Some(first) = t.frames.first() {
            if first.objects.len() != dataset.n_points {
                violations.push(Violation {
                    trajectory: Some(which),
                    frame: Some(0),
                    kind: ViolationKind::PointCountMismatch {
                        expected: dataset.n_points,
                        found: first.objects.len(),
                    },
                });
            }
        }
    }
    ValidationReport { violations }
}
