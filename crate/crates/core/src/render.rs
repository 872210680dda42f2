//! Pinhole cameras and a z-buffer triangle rasterizer.
//!
//! Cameras follow the computer-vision convention: +z forward, +x right, +y
//! down. Pixel `(i, j)` is centred on the continuous coordinate `(i, j)`, so a
//! point projecting to `u = 74.0` lands in the middle of column 74.

use alloc::vec::Vec;

use thiserror::Error;

use crate::geometry::{Pose, Vec3};
use crate::mesh::TriMesh;
#[allow(unused_imports)]
use num_traits::Float;

/// Camera-frame depth at or below which a point counts as behind the camera.
pub const BEHIND_CAMERA_EPS: f64 = 1e-6;

/// Near clipping plane of the rasterizer (meters).
pub const NEAR_PLANE: f64 = 1e-3;

/// Sentinel for "no face" / "no instance" in a [`DepthImage`].
pub const NONE: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("invalid camera: {0}")]
    InvalidCamera(&'static str),
    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    /// Square image with the principal point at its centre.
    pub fn centered(size: usize, focal: f64) -> Intrinsics {
        let c = (size as f64 - 1.0) * 0.5;
        Intrinsics { fx: focal, fy: focal, cx: c, cy: c, width: size, height: size }
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(RenderError::InvalidCamera("focal lengths must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(RenderError::InvalidCamera("image must be non-empty"));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(RenderError::InvalidCamera("principal point outside the image"));
        }
        Ok(())
    }
}

/// Pinhole camera; `pose` maps camera coordinates to world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    pub pose: Pose,
}

impl Camera {
    pub fn new(intrinsics: Intrinsics, pose: Pose) -> Result<Camera, RenderError> {
        intrinsics.validate()?;
        if !pose.is_finite() {
            return Err(RenderError::InvalidCamera("pose is not finite"));
        }
        Ok(Camera { intrinsics, pose })
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    pub fn position(&self) -> Vec3 {
        self.pose.translation
    }

    /// World direction of the optical axis.
    pub fn forward(&self) -> Vec3 {
        self.pose.apply_vector(Vec3::Z)
    }

    /// Metric width of one pixel at `depth`.
    pub fn pixel_footprint(&self, depth: f64) -> f64 {
        depth / self.intrinsics.fx.min(self.intrinsics.fy)
    }

    fn project_camera_frame(&self, p: Vec3) -> (f64, f64) {
        let k = &self.intrinsics;
        (k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy)
    }
}

/// Projects a world point to sub-pixel coordinates and camera-frame depth.
pub fn project(camera: &Camera, x: Vec3) -> Result<(f64, f64, f64), RenderError> {
    let p = camera.pose.inverse().apply_point(x);
    if p.z <= BEHIND_CAMERA_EPS {
        return Err(RenderError::BehindCamera { z: p.z });
    }
    let (u, v) = camera.project_camera_frame(p);
    Ok((u, v, p.z))
}

/// World point at camera-frame depth `depth` along the ray through `(u, v)`.
pub fn unproject(camera: &Camera, u: f64, v: f64, depth: f64) -> Vec3 {
    let k = &camera.intrinsics;
    let p = Vec3::new((u - k.cx) * depth / k.fx, (v - k.cy) * depth / k.fy, depth);
    camera.pose.apply_point(p)
}

/// `n` cameras evenly spaced in azimuth (starting on +x) at `elevation`,
/// `radius` from `look_at`, all aimed at it with +z up.
pub fn ring_rig(n: usize, radius: f64, elevation: f64, look_at: Vec3, intrinsics: Intrinsics) -> Vec<Camera> {
    let (se, ce) = elevation.sin_cos();
    (0..n)
        .map(|k| {
            let az = core::f64::consts::TAU * k as f64 / n as f64;
            let (sa, ca) = az.sin_cos();
            let eye = look_at + Vec3::new(ce * ca, ce * sa, se) * radius;
            Camera { intrinsics, pose: Pose::look_at(eye, look_at, Vec3::Z) }
        })
        .collect()
}

/// Depth buffer with per-pixel face and instance ids.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: usize,
    height: usize,
    depth: Vec<f64>,
    face: Vec<u32>,
    instance: Vec<u32>,
}

impl DepthImage {
    pub fn empty(width: usize, height: usize) -> DepthImage {
        let n = width * height;
        DepthImage {
            width,
            height,
            depth: alloc::vec![f64::INFINITY; n],
            face: alloc::vec![NONE; n],
            instance: alloc::vec![NONE; n],
        }
    }

    fn clear(&mut self, width: usize, height: usize) {
        let n = width * height;
        self.width = width;
        self.height = height;
        self.depth.clear();
        self.depth.resize(n, f64::INFINITY);
        self.face.clear();
        self.face.resize(n, NONE);
        self.instance.clear();
        self.instance.resize(n, NONE);
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Row-major depths; `+inf` marks background.
    pub fn depths(&self) -> &[f64] {
        &self.depth
    }

    pub fn depth(&self, x: usize, y: usize) -> f64 {
        self.depth[y * self.width + x]
    }

    pub fn face(&self, x: usize, y: usize) -> Option<u32> {
        let f = self.face[y * self.width + x];
        (f != NONE).then_some(f)
    }

    pub fn instance(&self, x: usize, y: usize) -> Option<u32> {
        let i = self.instance[y * self.width + x];
        (i != NONE).then_some(i)
    }

    pub fn is_foreground(&self, x: usize, y: usize) -> bool {
        self.depth[y * self.width + x].is_finite()
    }

    /// Row-major foreground mask.
    pub fn mask(&self) -> Vec<bool> {
        self.depth.iter().map(|d| d.is_finite()).collect()
    }

    pub fn foreground_count(&self) -> usize {
        self.depth.iter().filter(|d| d.is_finite()).count()
    }

    /// Unprojects every foreground pixel: `(world point, instance id)`.
    pub fn unproject_foreground(&self, camera: &Camera) -> Vec<(Vec3, u32)> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                let i = y * self.width + x;
                if self.depth[i].is_finite() {
                    out.push((unproject(camera, x as f64, y as f64, self.depth[i]), self.instance[i]));
                }
            }
        }
        out
    }
}

/// One triangle soup to rasterize: a mesh placed in the world by `pose`.
#[derive(Debug, Clone, Copy)]
pub struct SceneItem<'a> {
    pub mesh: &'a TriMesh,
    pub pose: Pose,
}

/// Reusable rasterization buffers.
#[derive(Debug, Clone)]
pub struct Rasterizer {
    image: DepthImage,
    camera_vertices: Vec<Vec3>,
}

impl Default for Rasterizer {
    fn default() -> Self {
        Self::new()
    }
}

impl Rasterizer {
    pub fn new() -> Rasterizer {
        Rasterizer { image: DepthImage::empty(0, 0), camera_vertices: Vec::new() }
    }

    /// Renders several meshes into one buffer; instance ids are item indices.
    pub fn render_scene(&mut self, items: &[SceneItem<'_>], camera: &Camera) -> &DepthImage {
        self.image.clear(camera.width(), camera.height());
        let world_to_camera = camera.pose.inverse();
        for (inst, item) in items.iter().enumerate() {
            let to_cam = world_to_camera.compose(&item.pose);
            self.camera_vertices.clear();
            self.camera_vertices.extend(item.mesh.vertices().iter().map(|v| to_cam.apply_point(*v)));
            for (fi, f) in item.mesh.faces().iter().enumerate() {
                let tri = f.map(|i| self.camera_vertices[i as usize]);
                raster_clipped(&mut self.image, camera, tri, fi as u32, inst as u32);
            }
        }
        &self.image
    }

    pub fn render(&mut self, mesh: &TriMesh, pose: &Pose, camera: &Camera) -> &DepthImage {
        self.render_scene(&[SceneItem { mesh, pose: *pose }], camera)
    }
}

/// Z-buffer render of `mesh` placed at `pose`.
pub fn render_depth(mesh: &TriMesh, pose: &Pose, camera: &Camera) -> DepthImage {
    let mut r = Rasterizer::new();
    r.render(mesh, pose, camera);
    r.image
}

pub fn render_scene(items: &[SceneItem<'_>], camera: &Camera) -> DepthImage {
    let mut r = Rasterizer::new();
    r.render_scene(items, camera);
    r.image
}

/// Clips a camera-frame triangle against the near plane and rasterizes the
/// resulting polygon as a fan.
fn raster_clipped(img: &mut DepthImage, camera: &Camera, tri: [Vec3; 3], face: u32, inst: u32) {
    if tri.iter().all(|p| p.z >= NEAR_PLANE) {
        raster_triangle(img, camera, tri, face, inst);
        return;
    }
    if tri.iter().all(|p| p.z < NEAR_PLANE) {
        return;
    }
    let mut poly: [Vec3; 4] = [Vec3::ZERO; 4];
    let mut n = 0;
    for i in 0..3 {
        let a = tri[i];
        let b = tri[(i + 1) % 3];
        let a_in = a.z >= NEAR_PLANE;
        let b_in = b.z >= NEAR_PLANE;
        if a_in {
            poly[n] = a;
            n += 1;
        }
        if a_in != b_in {
            let t = (NEAR_PLANE - a.z) / (b.z - a.z);
            let mut p = a.lerp(b, t);
            p.z = NEAR_PLANE;
            poly[n] = p;
            n += 1;
        }
    }
    for k in 1..n.saturating_sub(1) {
        raster_triangle(img, camera, [poly[0], poly[k], poly[k + 1]], face, inst);
    }
}

fn raster_triangle(img: &mut DepthImage, camera: &Camera, tri: [Vec3; 3], face: u32, inst: u32) {
    let s = tri.map(|p| camera.project_camera_frame(p));
    let inv_z = tri.map(|p| 1.0 / p.z);
    let area = edge(s[0], s[1], s[2]);
    if area == 0.0 || !area.is_finite() {
        return;
    }
    let (w, h) = (img.width as f64, img.height as f64);
    let min_x = s.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).ceil().max(0.0);
    let max_x = s.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).floor().min(w - 1.0);
    let min_y = s.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).ceil().max(0.0);
    let max_y = s.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).floor().min(h - 1.0);
    if min_x > max_x || min_y > max_y {
        return;
    }
    // orient so inside means all edge functions >= 0
    let (s, inv_z, area) = if area < 0.0 { ([s[0], s[2], s[1]], [inv_z[0], inv_z[2], inv_z[1]], -area) } else { (s, inv_z, area) };
    let bias = [top_left(s[1], s[2]), top_left(s[2], s[0]), top_left(s[0], s[1])];
    for y in min_y as usize..=max_y as usize {
        for x in min_x as usize..=max_x as usize {
            let p = (x as f64, y as f64);
            let w0 = edge(s[1], s[2], p);
            let w1 = edge(s[2], s[0], p);
            let w2 = edge(s[0], s[1], p);
            if !(inside(w0, bias[0]) && inside(w1, bias[1]) && inside(w2, bias[2])) {
                continue;
            }
            let iz = (w0 * inv_z[0] + w1 * inv_z[1] + w2 * inv_z[2]) / area;
            let z = 1.0 / iz;
            let i = y * img.width + x;
            if z < img.depth[i] {
                img.depth[i] = z;
                img.face[i] = face;
                img.instance[i] = inst;
            }
        }
    }
}

fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

/// Top-left rule for counter-clockwise (in y-down screen space) edges.
fn top_left(a: (f64, f64), b: (f64, f64)) -> bool {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    (dy == 0.0 && dx < 0.0) || dy > 0.0
}

fn inside(w: f64, top_left: bool) -> bool {
    w > 0.0 || (w == 0.0 && top_left)
}

/// True if `x` projects inside the image and its depth is within `tolerance`
/// of the rendered depth there.
pub fn visible(image: &DepthImage, camera: &Camera, x: Vec3, tolerance: f64) -> bool {
    let Ok((u, v, z)) = project(camera, x) else {
        return false;
    };
    let (px, py) = (u.round(), v.round());
    if px < 0.0 || py < 0.0 || px >= image.width as f64 || py >= image.height as f64 {
        return false;
    }
    let d = image.depth(px as usize, py as usize);
    d.is_finite() && (d - z).abs() <= tolerance
}

/// Flat Lambertian shading with the light at the camera, 8-bit grayscale.
/// `image` must come from rendering `mesh` at `pose` through `camera`.
pub fn shade_lambert(image: &DepthImage, mesh: &TriMesh, pose: &Pose, camera: &Camera) -> Vec<u8> {
    let mut out = alloc::vec![0u8; image.width * image.height];
    for y in 0..image.height {
        for x in 0..image.width {
            let Some(f) = image.face(x, y) else { continue };
            let n = pose.apply_vector(mesh.face_normal(f as usize));
            let p = unproject(camera, x as f64, y as f64, image.depth(x, y));
            let to_cam = (camera.position() - p).normalized();
            let lum = n.dot(to_cam).abs();
            out[y * image.width + x] = (lum * 255.0).round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Quat;
    use crate::primitives;
    use alloc::vec;

    fn cam_at_origin(size: usize, focal: f64) -> Camera {
        Camera::new(Intrinsics::centered(size, focal), Pose::IDENTITY).unwrap()
    }

    fn square(z: f64, half: f64) -> TriMesh {
        TriMesh::new(
            vec![Vec3::new(-half, -half, z), Vec3::new(half, -half, z), Vec3::new(half, half, z), Vec3::new(-half, half, z)],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn projection_examples() {
        let cam = Camera::new(Intrinsics { fx: 100.0, fy: 100.0, cx: 64.0, cy: 64.0, width: 128, height: 128 }, Pose::IDENTITY).unwrap();
        assert_eq!(project(&cam, Vec3::new(0.1, 0.0, 1.0)).unwrap(), (74.0, 64.0, 1.0));
        assert_eq!(project(&cam, Vec3::new(0.0, 0.0, 3.0)).unwrap(), (64.0, 64.0, 3.0));
        assert!(matches!(project(&cam, Vec3::new(0.0, 0.0, -1.0)), Err(RenderError::BehindCamera { .. })));
        assert!(matches!(project(&cam, Vec3::new(0.0, 0.0, 1e-7)), Err(RenderError::BehindCamera { .. })));
    }

    #[test]
    fn unproject_center_is_along_axis() {
        let pose = Pose::look_at(Vec3::new(1.0, 2.0, 3.0), Vec3::ZERO, Vec3::Z);
        let cam = Camera::new(Intrinsics::centered(64, 50.0), pose).unwrap();
        let k = cam.intrinsics;
        let p = unproject(&cam, k.cx, k.cy, 2.0);
        let expected = cam.position() + cam.forward() * 2.0;
        assert!(p.distance(expected) < 1e-12);
        let x = Vec3::new(0.1, -0.2, 0.05);
        let (u, v, d) = project(&cam, x).unwrap();
        assert!(unproject(&cam, u, v, d).distance(x) < 1e-9);
    }

    #[test]
    fn invalid_intrinsics() {
        let mut k = Intrinsics::centered(10, 10.0);
        k.fx = 0.0;
        assert!(Camera::new(k, Pose::IDENTITY).is_err());
        let mut k = Intrinsics::centered(10, 10.0);
        k.cx = 10.0;
        assert!(Camera::new(k, Pose::IDENTITY).is_err());
    }

    #[test]
    fn plane_depth_is_exact() {
        let cam = cam_at_origin(64, 64.0);
        let img = render_depth(&square(1.0, 0.2), &Pose::IDENTITY, &cam);
        assert!(img.foreground_count() > 100);
        for &d in img.depths().iter().filter(|d| d.is_finite()) {
            assert!((d - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn tilted_plane_is_perspective_correct() {
        let cam = cam_at_origin(64, 64.0);
        let pose = Pose::new(Quat::rot_y(0.6), Vec3::new(0.0, 0.0, 1.0));
        let mesh = square(0.0, 0.3);
        let img = render_depth(&mesh, &pose, &cam);
        let n = pose.apply_vector(Vec3::Z);
        for y in 0..64 {
            for x in 0..64 {
                if img.is_foreground(x, y) {
                    // ray/plane intersection oracle
                    let dir = unproject(&cam, x as f64, y as f64, 1.0);
                    let t = n.dot(pose.translation) / n.dot(dir);
                    assert!((img.depth(x, y) - t).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn behind_camera_is_empty() {
        let cam = cam_at_origin(32, 32.0);
        let img = render_depth(&square(-1.0, 0.5), &Pose::IDENTITY, &cam);
        assert_eq!(img.foreground_count(), 0);
    }

    #[test]
    fn nearer_surface_wins() {
        let cam = cam_at_origin(32, 32.0);
        let near = square(1.0, 0.2);
        let far = square(2.0, 0.6);
        let img = render_scene(
            &[SceneItem { mesh: &far, pose: Pose::IDENTITY }, SceneItem { mesh: &near, pose: Pose::IDENTITY }],
            &cam,
        );
        let c = 16;
        assert!((img.depth(c, c) - 1.0).abs() < 1e-9);
        assert_eq!(img.instance(c, c), Some(1));
        assert!((img.depth(7, 7) - 2.0).abs() < 1e-9);
        assert_eq!(img.instance(7, 7), Some(0));
    }

    #[test]
    fn shared_edges_leave_no_gaps_or_overlaps() {
        // two triangles of a square: every interior pixel covered exactly once
        let cam = cam_at_origin(40, 40.0);
        let mesh = square(1.0, 0.37);
        let img = render_depth(&mesh, &Pose::IDENTITY, &cam);
        let (lo, hi) = (20.0 - 0.37 * 40.0 - 0.5, 20.0 + 0.37 * 40.0 - 0.5);
        for y in 0..40 {
            for x in 0..40 {
                let xf = x as f64;
                let yf = y as f64;
                if xf > lo + 1.0 && xf < hi - 1.0 && yf > lo + 1.0 && yf < hi - 1.0 {
                    assert!(img.is_foreground(x, y), "hole at {x},{y}");
                }
            }
        }
    }

    #[test]
    fn near_plane_clipping_keeps_visible_part() {
        let cam = cam_at_origin(32, 16.0);
        // a floor strip that passes through the camera plane
        let mesh = TriMesh::new(
            vec![Vec3::new(-1.0, 0.2, -1.0), Vec3::new(1.0, 0.2, -1.0), Vec3::new(1.0, 0.2, 3.0), Vec3::new(-1.0, 0.2, 3.0)],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let img = render_depth(&mesh, &Pose::IDENTITY, &cam);
        assert!(img.foreground_count() > 0);
        for y in 0..32 {
            for x in 0..32 {
                if img.is_foreground(x, y) {
                    let p = unproject(&cam, x as f64, y as f64, img.depth(x, y));
                    assert!((p.y - 0.2).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn ring_rig_geometry() {
        let k = Intrinsics::centered(64, 64.0);
        let rig = ring_rig(4, 1.0, 0.0, Vec3::ZERO, k);
        let expected = [Vec3::X, Vec3::Y, -Vec3::X, -Vec3::Y];
        for (c, e) in rig.iter().zip(expected) {
            assert!(c.position().distance(e) < 1e-12);
        }
        let target = Vec3::new(0.1, 0.2, 0.3);
        let rig = ring_rig(8, 0.6, core::f64::consts::FRAC_PI_4, target, k);
        for c in &rig {
            assert!((c.position().z - target.z - 0.6 * core::f64::consts::FRAC_PI_4.sin()).abs() < 1e-12);
            let to_target = target - c.position();
            assert!(to_target.cross(c.forward()).norm() < 1e-9);
            assert!(to_target.dot(c.forward()) > 0.0);
            let (u, v, _) = project(c, target).unwrap();
            assert!((u - k.cx).abs() < 1e-9 && (v - k.cy).abs() < 1e-9);
        }
    }

    #[test]
    fn cube_front_and_back_vertices() {
        let cube = primitives::cuboid(Vec3::new(0.2, 0.2, 0.2));
        let pose = Pose::look_at(Vec3::new(1.0, 0.8, 0.6), Vec3::ZERO, Vec3::Z);
        let cam = Camera::new(Intrinsics::centered(128, 128.0), pose).unwrap();
        let img = render_depth(&cube, &Pose::IDENTITY, &cam);
        let tol = 3.0 * cam.pixel_footprint(1.4);
        assert!(visible(&img, &cam, Vec3::new(0.1, 0.1, 0.1), tol));
        assert!(!visible(&img, &cam, Vec3::new(-0.1, -0.1, -0.1), tol));
    }

    #[test]
    fn shading_is_bright_facing_the_camera() {
        let cam = cam_at_origin(32, 32.0);
        let mesh = square(1.0, 0.3);
        let img = render_depth(&mesh, &Pose::IDENTITY, &cam);
        let g = shade_lambert(&img, &mesh, &Pose::IDENTITY, &cam);
        assert!(g[16 * 32 + 16] >= 254);
        assert_eq!(g[0], 0);
    }
}
