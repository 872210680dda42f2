//! A synthetic teapot-pouring source demonstration: a scripted end-effector
//! path around a toy teapot and a cup, observed by the scene cameras.

use alloc::vec::Vec;

use thiserror::Error;

use crate::cloud::{preprocess_observation, CloudError, Label, Workspace, DEFAULT_CLOUD_SIZE, DEFAULT_MIN_PTS};
use crate::demo::{DemoError, DemoStep, Demonstration, KeypointAnnotation, SkillRange};
use crate::geometry::{slerp, Pose, Quat, Vec3};
use crate::mesh::{MeshError, TriMesh};
use crate::primitives::{self, TeapotParams};
use crate::render::Rasterizer;
use crate::scene::{observe, scene_cameras, ScenePart, WORKSPACE_CENTER};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Cloud(#[from] CloudError),
    #[error(transparent)]
    Demo(#[from] DemoError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PourParams {
    pub teapot: TeapotParams,
    /// Teapot position on the table and yaw about +z.
    pub object_xy: (f64, f64),
    pub object_yaw: f64,
    /// Cup centre on the table.
    pub cup_xy: (f64, f64),
    pub cup_radius: f64,
    pub cup_height: f64,
    /// Peak tilt of the pour (radians).
    pub pour_angle: f64,
    pub resolution: usize,
    pub cloud_size: usize,
    pub dbscan_eps: f64,
}

impl Default for PourParams {
    fn default() -> Self {
        Self {
            teapot: TeapotParams::default(),
            object_xy: (0.45, -0.1),
            object_yaw: core::f64::consts::FRAC_PI_2,
            cup_xy: (0.5, 0.2),
            cup_radius: 0.035,
            cup_height: 0.09,
            pour_angle: 0.9,
            resolution: 192,
            cloud_size: DEFAULT_CLOUD_SIZE,
            dbscan_eps: 0.01,
        }
    }
}

/// Source demonstration plus the scene it was recorded in.
#[derive(Debug, Clone)]
pub struct PourDemo {
    pub demo: Demonstration,
    /// Canonicalized source teapot.
    pub mesh: TriMesh,
    pub goal_mesh: TriMesh,
    pub goal_pose: Pose,
    /// Object pose at every step.
    pub object_poses: Vec<Pose>,
}

/// Default tabletop workspace: everything above the table top within reach.
pub fn default_workspace() -> Workspace {
    Workspace::new(Vec3::new(0.0, -0.5, 0.004), Vec3::new(0.95, 0.5, 0.7)).expect("valid box")
}

/// Pose placing `mesh` at `(x, y)` with `yaw` so its lowest vertex touches
/// the plane `z = support`.
pub fn resting_pose(mesh: &TriMesh, x: f64, y: f64, yaw: f64, support: f64) -> Pose {
    let r = Quat::rot_z(yaw);
    let min_z = mesh.vertices().iter().map(|v| r.rotate(*v).z).fold(f64::INFINITY, f64::min);
    Pose::new(r, Vec3::new(x, y, support - min_z))
}

/// Table slab whose top face is `z = 0`.
pub fn table() -> (TriMesh, Pose) {
    (primitives::cuboid(Vec3::new(1.4, 1.4, 0.02)), Pose::from_translation(Vec3::new(0.45, 0.0, -0.01)))
}

fn lerp_pose(a: &Pose, b: &Pose, s: f64) -> Pose {
    Pose::new(slerp(a.rotation, b.rotation, s), a.translation.lerp(b.translation, s))
}

fn segment(out: &mut Vec<(Pose, f64)>, a: &Pose, b: &Pose, steps: usize, gripper: f64) {
    for k in 0..steps {
        out.push((lerp_pose(a, b, (k + 1) as f64 / steps as f64), gripper));
    }
}

/// Grasp frame in the object frame: approach horizontally through the
/// affording point towards the mesh centre, jaws closing across the handle.
fn grasp_in_object(x_aff: Vec3, up: Vec3) -> Pose {
    let inward = -x_aff;
    let a = (inward - up * inward.dot(up)).normalized();
    let y = up.cross(a).normalized();
    let x = y.cross(a);
    Pose::new(Quat::from_axes(x, y, a), x_aff)
}

/// Scripts, observes and validates the pouring demonstration.
pub fn teapot_pour(params: &PourParams) -> Result<PourDemo, SynthError> {
    let teapot = primitives::toy_teapot(&params.teapot);
    let (mesh, _) = teapot.mesh.canonicalize_pca()?;
    let canon = mesh.canonical_pose();
    let keypoints = KeypointAnnotation {
        affording_point: canon.apply_point(teapot.affording_point),
        function_point: canon.apply_point(teapot.function_point),
    };
    let up_obj = canon.rotation.rotate(Vec3::Z);

    let t_init = resting_pose(&mesh, params.object_xy.0, params.object_xy.1, params.object_yaw, 0.0);
    let goal_mesh = primitives::cup(params.cup_radius, params.cup_height);
    let goal_pose = Pose::from_translation(Vec3::new(params.cup_xy.0, params.cup_xy.1, 0.0));

    let grasp = t_init.compose(&grasp_in_object(keypoints.affording_point, up_obj));
    let approach_dir = grasp.rotation.rotate(Vec3::Z);
    let pre = Pose::new(grasp.rotation, grasp.translation - approach_dir * 0.08 + Vec3::Z * 0.04);
    let home = Pose::new(grasp.rotation, pre.translation + Vec3::Z * 0.12);

    // spout tip right above the cup when the pour starts
    let f0 = t_init.apply_point(keypoints.function_point);
    let f_start = Vec3::new(params.cup_xy.0, params.cup_xy.1, params.cup_height + 0.07);
    let pour = Pose::new(grasp.rotation, grasp.translation + (f_start - f0));
    let lift = Pose::new(grasp.rotation, grasp.translation + Vec3::Z * (f_start.z - f0.z));
    let spout_dir = {
        let d = f0 - t_init.translation;
        Vec3::new(d.x, d.y, 0.0).normalized()
    };
    let tilt_axis = Vec3::Z.cross(spout_dir);

    let mut path: Vec<(Pose, f64)> = alloc::vec![(home, 1.0)];
    segment(&mut path, &home, &pre, 14, 1.0);
    segment(&mut path, &pre, &grasp, 15, 1.0);
    for g in [0.8, 0.45, 0.1, 0.0, 0.0, 0.0] {
        path.push((grasp, g));
    }
    segment(&mut path, &grasp, &lift, 10, 0.0);
    segment(&mut path, &lift, &pour, 20, 0.0);
    let t_s = path.len();
    let skill_steps = 41;
    for k in 0..skill_steps {
        let s = k as f64 / (skill_steps - 1) as f64;
        let bump = core::f64::consts::PI * s;
        let q = Quat::from_axis_angle(tilt_axis, params.pour_angle * bump.sin());
        let f = f_start + Vec3::new(0.0, 0.0, -0.02 * bump.sin()) + spout_dir * (0.015 * s);
        let ee = Pose::new(q.mul(pour.rotation), f + q.rotate(pour.translation - f_start));
        path.push((ee, 0.0));
    }
    let t_e = path.len() - 1;
    let skill_end = path[t_e].0;
    segment(&mut path, &skill_end, &lift, 24, 0.0);
    segment(&mut path, &lift, &grasp, 10, 0.0);
    for g in [0.3, 0.7, 1.0, 1.0] {
        path.push((grasp, g));
    }
    segment(&mut path, &grasp, &pre, 10, 1.0);

    let gripper: Vec<f64> = path.iter().map(|p| p.1).collect();
    let t_grasp = crate::demo::extract_grasp_time(&gripper)?;
    let attach = path[t_grasp].0.inverse().compose(&t_init);
    let mut object_poses = Vec::with_capacity(path.len());
    let mut held = false;
    let mut current = t_init;
    for (t, (ee, g)) in path.iter().enumerate() {
        if t == t_grasp {
            held = true;
        }
        if held && t > t_e && *g > crate::demo::GRIPPER_CLOSED_THRESHOLD {
            held = false;
        }
        if held {
            current = ee.compose(&attach);
        }
        object_poses.push(current);
    }

    let cameras = scene_cameras(params.resolution, WORKSPACE_CENTER);
    let workspace = default_workspace();
    let (table_mesh, table_pose) = table();
    let mut raster = Rasterizer::new();
    let mut steps = Vec::with_capacity(path.len());
    for (t, ((ee, g), obj)) in path.iter().zip(&object_poses).enumerate() {
        let hand = primitives::gripper(*g);
        let parts = [
            ScenePart { mesh: &hand, pose: *ee, label: Label::Robot },
            ScenePart { mesh: &mesh, pose: *obj, label: Label::Object },
            ScenePart { mesh: &goal_mesh, pose: goal_pose, label: Label::Goal },
            ScenePart { mesh: &table_mesh, pose: table_pose, label: Label::Other },
        ];
        let raw = observe(&parts, &cameras, &mut raster);
        let cloud = preprocess_observation(&raw, &workspace, params.dbscan_eps, DEFAULT_MIN_PTS, params.cloud_size)?;
        steps.push(DemoStep { time_index: t, ee_pose: *ee, gripper: *g, proprioception: Vec::new(), cloud });
    }
    let demo = Demonstration::new(steps, t_grasp, SkillRange::new(t_s, t_e)?, t_init, keypoints)?;
    Ok(PourDemo { demo, mesh, goal_mesh, goal_pose, object_poses })
}
