//! Demonstration data model: steps, stage boundaries, keypoint annotations and
//! grasp-time extraction from the gripper channel.

use alloc::vec::Vec;

use thiserror::Error;

use crate::cloud::SegmentedPointCloud;
use crate::geometry::{Pose, Vec3};
use crate::mesh::TriMesh;

/// Gripper opening at or below this value counts as closed.
pub const GRIPPER_CLOSED_THRESHOLD: f64 = 0.5;

/// Consecutive closed readings needed to accept a grasp.
pub const GRASP_PERSISTENCE: usize = 3;

/// Maximum distance between an annotated keypoint and the mesh surface.
pub const KEYPOINT_SURFACE_TOLERANCE: f64 = 0.02;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DemoError {
    #[error("gripper never closes for {persistence} consecutive steps")]
    NoGraspFound { persistence: usize },
    #[error("invalid skill range [{start}, {end}]")]
    InvalidSkillRange { start: usize, end: usize },
    #[error("stage boundaries violate 0 <= t_grasp < t_s <= t_e < len: t_grasp={t_grasp}, skill=[{start}, {end}], len={len}")]
    InvalidStages { t_grasp: usize, start: usize, end: usize, len: usize },
    #[error("gripper state at step {step} is inconsistent with the grasp at {t_grasp}")]
    GripperInconsistent { step: usize, t_grasp: usize },
    #[error("step {step} has {found} cloud points, expected {expected}")]
    CloudSize { step: usize, found: usize, expected: usize },
    #[error("{which} keypoint lies {distance:.4} m from the mesh surface")]
    KeypointOffSurface { which: &'static str, distance: f64 },
    #[error("demonstration has no steps")]
    Empty,
}

/// Inclusive range of time indices `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SkillRange {
    pub start: usize,
    pub end: usize,
}

impl SkillRange {
    pub fn new(start: usize, end: usize) -> Result<Self, DemoError> {
        if start > end {
            return Err(DemoError::InvalidSkillRange { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, t: usize) -> bool {
        t >= self.start && t <= self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Affording and function points in the local frame of the source mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeypointAnnotation {
    pub affording_point: Vec3,
    pub function_point: Vec3,
}

impl KeypointAnnotation {
    /// Checks both points lie within 2 cm of the mesh surface.
    pub fn validate_against(&self, mesh: &TriMesh) -> Result<(), DemoError> {
        for (which, p) in [("affording", self.affording_point), ("function", self.function_point)] {
            let distance = mesh.surface_distance(p);
            if distance > KEYPOINT_SURFACE_TOLERANCE {
                return Err(DemoError::KeypointOffSurface { which, distance });
            }
        }
        Ok(())
    }

    /// Same keypoints expressed after applying `pose` to the mesh frame.
    pub fn transformed(&self, pose: &Pose) -> KeypointAnnotation {
        KeypointAnnotation {
            affording_point: pose.apply_point(self.affording_point),
            function_point: pose.apply_point(self.function_point),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoStep {
    pub time_index: usize,
    /// End-effector pose in the world frame.
    pub ee_pose: Pose,
    /// Gripper opening in `[0, 1]`, 0 = closed.
    pub gripper: f64,
    /// Joint angles (radians); empty when no kinematic chain is configured.
    pub proprioception: Vec<f64>,
    pub cloud: SegmentedPointCloud,
}

/// Stage of a time index within a demonstration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Grasp,
    Skill,
    Transition,
}

/// A validated demonstration with stage boundaries and keypoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    steps: Vec<DemoStep>,
    t_grasp: usize,
    skill_range: SkillRange,
    source_object_pose: Pose,
    keypoints: KeypointAnnotation,
}

impl Demonstration {
    pub fn new(
        steps: Vec<DemoStep>,
        t_grasp: usize,
        skill_range: SkillRange,
        source_object_pose: Pose,
        keypoints: KeypointAnnotation,
    ) -> Result<Self, DemoError> {
        validate_stages(steps.len(), t_grasp, skill_range)?;
        for (t, s) in steps.iter().enumerate() {
            let closed = s.gripper <= GRIPPER_CLOSED_THRESHOLD;
            if (t < t_grasp && closed) || ((t_grasp..=skill_range.end).contains(&t) && !closed) {
                return Err(DemoError::GripperInconsistent { step: t, t_grasp });
            }
        }
        if let Some(first) = steps.first() {
            let n = first.cloud.len();
            if let Some((t, s)) = steps.iter().enumerate().find(|(_, s)| s.cloud.len() != n) {
                return Err(DemoError::CloudSize { step: t, found: s.cloud.len(), expected: n });
            }
        }
        Ok(Self { steps, t_grasp, skill_range, source_object_pose, keypoints })
    }

    pub fn steps(&self) -> &[DemoStep] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn t_grasp(&self) -> usize {
        self.t_grasp
    }

    pub fn skill_range(&self) -> SkillRange {
        self.skill_range
    }

    pub fn source_object_pose(&self) -> Pose {
        self.source_object_pose
    }

    pub fn keypoints(&self) -> KeypointAnnotation {
        self.keypoints
    }

    /// Points per frame (0 for an empty demonstration).
    pub fn cloud_size(&self) -> usize {
        self.steps.first().map_or(0, |s| s.cloud.len())
    }

    pub fn ee_poses(&self) -> impl Iterator<Item = Pose> + '_ {
        self.steps.iter().map(|s| s.ee_pose)
    }

    pub fn gripper(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.gripper).collect()
    }

    pub fn clouds(&self) -> Vec<SegmentedPointCloud> {
        self.steps.iter().map(|s| s.cloud.clone()).collect()
    }

    pub fn stage_of(&self, t: usize) -> Stage {
        stage_of(t, self.t_grasp, self.skill_range)
    }
}

/// Checks `0 <= t_grasp < t_s <= t_e < len`.
pub fn validate_stages(len: usize, t_grasp: usize, skill: SkillRange) -> Result<(), DemoError> {
    if len == 0 {
        return Err(DemoError::Empty);
    }
    if !(t_grasp < skill.start && skill.start <= skill.end && skill.end < len) {
        return Err(DemoError::InvalidStages { t_grasp, start: skill.start, end: skill.end, len });
    }
    Ok(())
}

/// Grasp stage is `[0, t_grasp]`, skill stage is the skill range, everything
/// else is transition.
pub fn stage_of(t: usize, t_grasp: usize, skill: SkillRange) -> Stage {
    if t <= t_grasp {
        Stage::Grasp
    } else if skill.contains(t) {
        Stage::Skill
    } else {
        Stage::Transition
    }
}

/// First index where the gripper reads closed and stays closed for
/// [`GRASP_PERSISTENCE`] consecutive steps, after having been open.
pub fn extract_grasp_time(gripper: &[f64]) -> Result<usize, DemoError> {
    let closed = |g: f64| g <= GRIPPER_CLOSED_THRESHOLD;
    let mut run = 0;
    for (t, &g) in gripper.iter().enumerate() {
        if closed(g) {
            run += 1;
            if run == GRASP_PERSISTENCE {
                let start = t + 1 - GRASP_PERSISTENCE;
                // an initially closed gripper is not a grasp event
                if start > 0 {
                    return Ok(start);
                }
            }
        } else {
            run = 0;
        }
    }
    Err(DemoError::NoGraspFound { persistence: GRASP_PERSISTENCE })
}
