//! Labelled point-cloud observations of a tabletop scene seen by fixed cameras.

use alloc::vec::Vec;

use crate::cloud::{Label, SegmentedPointCloud};
use crate::geometry::{Pose, Vec3};
use crate::mesh::TriMesh;
use crate::render::{Camera, Intrinsics, Rasterizer, SceneItem};

/// Centre of the default tabletop workspace (meters, world frame).
pub const WORKSPACE_CENTER: Vec3 = Vec3::new(0.45, 0.0, 0.1);

#[derive(Debug, Clone, Copy)]
pub struct ScenePart<'a> {
    pub mesh: &'a TriMesh,
    pub pose: Pose,
    pub label: Label,
}

/// Two cameras in front of the robot, left and right of the workspace, with a
/// square image of `resolution` pixels.
pub fn scene_cameras(resolution: usize, look_at: Vec3) -> Vec<Camera> {
    let intrinsics = Intrinsics::centered(resolution, 1.2 * resolution as f64);
    [-1.0, 1.0]
        .iter()
        .map(|side| {
            let eye = look_at + Vec3::new(0.6, 0.5 * side, 0.45);
            Camera { intrinsics, pose: Pose::look_at(eye, look_at, Vec3::Z) }
        })
        .collect()
}

/// Renders `parts` from every camera and unprojects the foreground, camera by
/// camera in row-major pixel order, labelling each point by the part it hit.
pub fn observe(parts: &[ScenePart<'_>], cameras: &[Camera], raster: &mut Rasterizer) -> SegmentedPointCloud {
    let items: Vec<SceneItem<'_>> = parts.iter().map(|p| SceneItem { mesh: p.mesh, pose: p.pose }).collect();
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for cam in cameras {
        let image = raster.render_scene(&items, cam);
        for (p, inst) in image.unproject_foreground(cam) {
            points.push(p.to_f32());
            labels.push(parts[inst as usize].label);
        }
    }
    SegmentedPointCloud::new(points, labels).expect("rendered points are finite and paired with labels")
}
