//! Trajectory transfer to a new object: object-anchored replay of the grasp
//! segment, function-point replay of the skill segment, straight-line
//! transitions, pose sampling and whole-demonstration assembly.

use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::demo::{Demonstration, KeypointAnnotation, SkillRange, GRIPPER_CLOSED_THRESHOLD};
use crate::geometry::{slerp, Pose, Quat, Vec3};
#[allow(unused_imports)]
use num_traits::Float;

/// Default transition waypoint spacing (meters).
pub const DEFAULT_TRANSITION_STEP: f64 = 0.01;

/// Default minimum number of transition waypoints.
pub const DEFAULT_MIN_STEPS: usize = 5;

/// Upper bound on the grasp-to-function-point offset (meters).
pub const MAX_FUNCTION_OFFSET: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransferError {
    #[error("path is empty")]
    EmptyPath,
    #[error("waypoint {0} is not finite")]
    NonFinite(usize),
    #[error("gripper is open at skill waypoint {index}")]
    NotGrasped { index: usize },
    #[error("transition waypoint {index} is in collision")]
    CollisionDetected { index: usize },
    #[error("function point lies {distance:.3} m from the gripper")]
    FunctionFrameTooFar { distance: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub pose: Pose,
    pub gripper: f64,
}

/// Non-empty sequence of finite end-effector waypoints.
#[derive(Debug, Clone, PartialEq)]
pub struct EePath {
    waypoints: Vec<Waypoint>,
}

impl EePath {
    pub fn new(waypoints: Vec<Waypoint>) -> Result<EePath, TransferError> {
        if waypoints.is_empty() {
            return Err(TransferError::EmptyPath);
        }
        if let Some(i) = waypoints.iter().position(|w| !w.pose.is_finite() || !w.gripper.is_finite()) {
            return Err(TransferError::NonFinite(i));
        }
        Ok(EePath { waypoints })
    }

    /// Steps `range` (inclusive) of a demonstration.
    pub fn from_demo(demo: &Demonstration, start: usize, end: usize) -> Result<EePath, TransferError> {
        let steps = demo.steps().get(start..=end).ok_or(TransferError::EmptyPath)?;
        EePath::new(steps.iter().map(|s| Waypoint { pose: s.ee_pose, gripper: s.gripper }).collect())
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn first(&self) -> Waypoint {
        self.waypoints[0]
    }

    pub fn last(&self) -> Waypoint {
        self.waypoints[self.waypoints.len() - 1]
    }

    pub fn poses(&self) -> impl Iterator<Item = Pose> + '_ {
        self.waypoints.iter().map(|w| w.pose)
    }

    fn map_poses(&self, f: impl Fn(&Pose) -> Pose) -> EePath {
        EePath { waypoints: self.waypoints.iter().map(|w| Waypoint { pose: f(&w.pose), gripper: w.gripper }).collect() }
    }
}

/// Re-anchors an object-relative segment: every pose `P` becomes
/// `T′ · shift(T_init⁻¹ · P)`, where `shift` adds `x_aff′ − x_aff` to the
/// translation of the object-local pose.
pub fn transfer_grasp(path: &EePath, t_init: &Pose, x_aff: Vec3, x_aff_new: Vec3, t_new: &Pose) -> EePath {
    let inv = t_init.inverse();
    let delta = x_aff_new - x_aff;
    path.map_poses(|p| {
        let mut local = inv.compose(p);
        local.translation += delta;
        t_new.compose(&local)
    })
}

/// Function point expressed in the end-effector frame while grasped; the
/// function frame shares the end-effector orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionFrame {
    pub p_fun_ee: Vec3,
}

impl FunctionFrame {
    /// From the end-effector pose at grasp, the object pose at grasp and the
    /// function point in the object frame.
    pub fn at_grasp(ee_pose: &Pose, object_pose: &Pose, x_fun: Vec3) -> Result<FunctionFrame, TransferError> {
        let p_fun_ee = ee_pose.inverse().apply_point(object_pose.apply_point(x_fun));
        let distance = p_fun_ee.norm();
        if !(distance < MAX_FUNCTION_OFFSET) {
            return Err(TransferError::FunctionFrameTooFar { distance });
        }
        Ok(FunctionFrame { p_fun_ee })
    }

    /// World position of the function point for end-effector pose `ee`.
    pub fn world_point(&self, ee: &Pose) -> Vec3 {
        ee.apply_point(self.p_fun_ee)
    }

    /// `T^fun_ee` as a pose: pure translation by `p_fun_ee`.
    pub fn offset(&self) -> Pose {
        Pose::from_translation(self.p_fun_ee)
    }
}

/// How the skill segment is carried over to the new object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SkillMode {
    /// The new function point retraces the source function-point world path.
    GoalAnchored,
    /// Function-point path normalized by the source object pose, shifted by
    /// the keypoint delta and re-applied at the new object pose.
    Literal { t_init: Pose, t_new: Pose, x_fun: Vec3, x_fun_new: Vec3 },
}

/// Transfers a skill segment given the source and target function frames.
pub fn transfer_skill(
    path: &EePath,
    source: &FunctionFrame,
    target: &FunctionFrame,
    mode: &SkillMode,
) -> Result<EePath, TransferError> {
    if let Some(index) = path.waypoints.iter().position(|w| w.gripper > GRIPPER_CLOSED_THRESHOLD) {
        return Err(TransferError::NotGrasped { index });
    }
    Ok(match *mode {
        SkillMode::GoalAnchored => path.map_poses(|p| {
            let f = p.apply_point(source.p_fun_ee);
            Pose::new(p.rotation, f - p.rotation.rotate(target.p_fun_ee))
        }),
        SkillMode::Literal { t_init, t_new, x_fun, x_fun_new } => {
            let inv = t_init.inverse();
            let delta = x_fun_new - x_fun;
            let back = target.offset().inverse();
            path.map_poses(|p| {
                let mut local = inv.compose(&p.compose(&source.offset()));
                local.translation += delta;
                t_new.compose(&local).compose(&back)
            })
        }
    })
}

/// Straight-line transition: `K = max(min_steps, ceil(‖Δt‖ / step))`
/// waypoints (at least 2 unless the endpoints coincide), positions linearly
/// interpolated and orientations slerped, endpoints reproduced exactly.
pub fn plan_transition(
    from: &Pose,
    to: &Pose,
    step: f64,
    min_steps: usize,
    collision_check: Option<&dyn Fn(&Pose) -> bool>,
) -> Result<Vec<Pose>, TransferError> {
    if !(step > 0.0) {
        return Err(TransferError::InvalidParameter("transition step must be positive"));
    }
    let d = from.translation.distance(to.translation);
    // the slack keeps exact multiples such as 0.1 / 0.01 from rounding up
    let mut k = min_steps.max((d / step - 1e-9).ceil() as usize);
    if k < 2 && from != to {
        k = 2;
    }
    let k = k.max(1);
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let pose = if i == 0 {
            *from
        } else if i == k - 1 {
            *to
        } else {
            let s = i as f64 / (k - 1) as f64;
            Pose::new(slerp(from.rotation, to.rotation, s), from.translation.lerp(to.translation, s))
        };
        if let Some(check) = collision_check {
            if check(&pose) {
                return Err(TransferError::CollisionDetected { index: i });
            }
        }
        out.push(pose);
    }
    Ok(out)
}

/// Planar placement ranges: uniform x, y and yaw, fixed z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSampler {
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub yaw: (f64, f64),
    pub z: f64,
}

impl PoseSampler {
    /// A box of `width × depth` meters centred on `(cx, cy)`.
    pub fn centered(cx: f64, cy: f64, width: f64, depth: f64, yaw: (f64, f64), z: f64) -> PoseSampler {
        PoseSampler { x: (cx - width / 2.0, cx + width / 2.0), y: (cy - depth / 2.0, cy + depth / 2.0), yaw, z }
    }

    /// Always returns `pose`'s position and yaw.
    pub fn fixed(pose: &Pose) -> PoseSampler {
        let t = pose.translation;
        let yaw = yaw_of(pose.rotation);
        PoseSampler { x: (t.x, t.x), y: (t.y, t.y), yaw: (yaw, yaw), z: t.z }
    }

    pub fn validate(&self) -> Result<(), TransferError> {
        let ok = |r: (f64, f64)| r.0.is_finite() && r.1.is_finite() && r.0 <= r.1;
        if !(ok(self.x) && ok(self.y) && ok(self.yaw) && self.z.is_finite()) {
            return Err(TransferError::InvalidParameter("sampler ranges must be finite with lo <= hi"));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Pose {
        let mut u = |r: (f64, f64)| r.0 + (r.1 - r.0) * rng.gen::<f64>();
        let x = u(self.x);
        let y = u(self.y);
        let yaw = u(self.yaw);
        Pose::new(Quat::rot_z(yaw), Vec3::new(x, y, self.z))
    }

    pub fn contains(&self, pose: &Pose, tol: f64) -> bool {
        let t = pose.translation;
        let yaw = yaw_of(pose.rotation);
        let within = |v: f64, r: (f64, f64)| v >= r.0 - tol && v <= r.1 + tol;
        within(t.x, self.x) && within(t.y, self.y) && within(yaw, self.yaw) && (t.z - self.z).abs() <= tol
    }
}

/// Rotation angle about +z of a pure yaw rotation, in `(-π, π]`.
pub fn yaw_of(q: Quat) -> f64 {
    let v = q.vector_part();
    2.0 * v.z.atan2(q.w())
}

/// Trajectory generation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerateParams {
    pub transition_step: f64,
    pub min_steps: usize,
    /// Skill transfer mode; `true` selects the literal compositions.
    pub literal: bool,
}

impl Default for GenerateParams {
    fn default() -> Self {
        Self { transition_step: DEFAULT_TRANSITION_STEP, min_steps: DEFAULT_MIN_STEPS, literal: false }
    }
}

/// Where a generated waypoint came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Approach,
    Grasp(usize),
    Transition,
    Skill(usize),
    Retreat(usize),
}

/// End-effector trajectory of a synthesized demonstration (no observations).
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedTrajectory {
    pub poses: Vec<Pose>,
    pub gripper: Vec<f64>,
    pub origin: Vec<Origin>,
    pub t_grasp: usize,
    pub skill_range: SkillRange,
    /// Object pose while resting, before the grasp.
    pub object_pose: Pose,
    pub function_frame: FunctionFrame,
}

impl GeneratedTrajectory {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Object pose at every step: resting before the grasp, rigidly attached
    /// to the gripper while closed, left where it was released afterwards.
    pub fn object_poses(&self) -> Vec<Pose> {
        let attach = self.poses[self.t_grasp].inverse().compose(&self.object_pose);
        let mut out = Vec::with_capacity(self.poses.len());
        let mut current = self.object_pose;
        let mut held = false;
        for (t, p) in self.poses.iter().enumerate() {
            if t == self.t_grasp {
                held = true;
            }
            if held && t > self.skill_range.end && self.gripper[t] > GRIPPER_CLOSED_THRESHOLD {
                held = false;
            }
            if held {
                current = p.compose(&attach);
            }
            out.push(current);
        }
        out
    }
}

/// Synthesizes the end-effector trajectory for the object placed at `t_new`
/// with keypoints `keypoints` (object frame): approach transition, grasp
/// segment, transition, skill segment, re-anchored retreat.
pub fn generate_trajectory(
    source: &Demonstration,
    keypoints: &KeypointAnnotation,
    t_new: &Pose,
    params: &GenerateParams,
    collision_check: Option<&dyn Fn(&Pose) -> bool>,
) -> Result<GeneratedTrajectory, TransferError> {
    let t_init = source.source_object_pose();
    let src_kp = source.keypoints();
    let tg = source.t_grasp();
    let skill = source.skill_range();
    let steps = source.steps();

    let grasp = EePath::from_demo(source, 0, tg)?;
    let grasp_new = transfer_grasp(&grasp, &t_init, src_kp.affording_point, keypoints.affording_point, t_new);
    let grasp_pose_new = grasp_new.last().pose;

    let ff_src = FunctionFrame::at_grasp(&steps[tg].ee_pose, &t_init, src_kp.function_point)?;
    let ff_new = FunctionFrame::at_grasp(&grasp_pose_new, t_new, keypoints.function_point)?;
    let mode = if params.literal {
        SkillMode::Literal { t_init, t_new: *t_new, x_fun: src_kp.function_point, x_fun_new: keypoints.function_point }
    } else {
        SkillMode::GoalAnchored
    };
    let skill_path = EePath::from_demo(source, skill.start, skill.end)?;
    let skill_new = transfer_skill(&skill_path, &ff_src, &ff_new, &mode)?;

    let mut poses = Vec::new();
    let mut gripper = Vec::new();
    let mut origin = Vec::new();

    let home = steps[0].ee_pose;
    let approach = plan_transition(&home, &grasp_new.first().pose, params.transition_step, params.min_steps, collision_check)?;
    for p in &approach[..approach.len() - 1] {
        poses.push(*p);
        gripper.push(steps[0].gripper);
        origin.push(Origin::Approach);
    }
    for (i, w) in grasp_new.waypoints().iter().enumerate() {
        poses.push(w.pose);
        gripper.push(w.gripper);
        origin.push(Origin::Grasp(i));
    }
    let t_grasp = poses.len() - 1;

    let closed = steps[tg].gripper;
    let middle = plan_transition(&grasp_pose_new, &skill_new.first().pose, params.transition_step, params.min_steps, collision_check)?;
    for p in middle.iter().skip(1).take(middle.len().saturating_sub(2)) {
        poses.push(*p);
        gripper.push(closed);
        origin.push(Origin::Transition);
    }
    let skill_start = poses.len();
    for (i, w) in skill_new.waypoints().iter().enumerate() {
        poses.push(w.pose);
        gripper.push(w.gripper);
        origin.push(Origin::Skill(skill.start + i));
    }
    let skill_range = SkillRange { start: skill_start, end: poses.len() - 1 };

    // retreat: rigid continuation of the skill end
    let src_end = steps[skill.end].ee_pose;
    let anchor = skill_new.last().pose.compose(&src_end.inverse());
    for (t, s) in steps.iter().enumerate().skip(skill.end + 1) {
        poses.push(anchor.compose(&s.ee_pose));
        gripper.push(s.gripper);
        origin.push(Origin::Retreat(t));
    }

    if let Some(i) = poses.iter().position(|p| !p.is_finite()) {
        return Err(TransferError::NonFinite(i));
    }
    Ok(GeneratedTrajectory { poses, gripper, origin, t_grasp, skill_range, object_pose: *t_new, function_frame: ff_new })
}
