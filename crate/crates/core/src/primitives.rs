//! Procedural meshes: boxes, ellipsoids, frusta, torus arcs, a parametric toy
//! teapot family, a parallel-jaw gripper proxy and a cup.
//!
//! All primitives are closed with outward (counter-clockwise) winding.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI, TAU};
use core::ops::Range;

use rand::Rng;

use crate::geometry::{Pose, Quat, Vec3};
use crate::mesh::TriMesh;
#[allow(unused_imports)]
use num_traits::Float;


/// Incremental vertex/face buffer.
#[derive(Debug, Default, Clone)]
pub struct MeshBuilder {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
}

impl MeshBuilder {
    pub fn vertex(&mut self, v: Vec3) -> u32 {
        self.vertices.push(v);
        (self.vertices.len() - 1) as u32
    }

    pub fn face(&mut self, a: u32, b: u32, c: u32) {
        self.faces.push([a, b, c]);
    }

    pub fn quad(&mut self, a: u32, b: u32, c: u32, d: u32) {
        self.face(a, b, c);
        self.face(a, c, d);
    }

    /// Appends another builder, moved by `pose`; returns the new face range.
    pub fn append(&mut self, other: &MeshBuilder, pose: &Pose) -> Range<usize> {
        let off = self.vertices.len() as u32;
        let start = self.faces.len();
        self.vertices.extend(other.vertices.iter().map(|v| pose.apply_point(*v)));
        self.faces.extend(other.faces.iter().map(|f| f.map(|i| i + off)));
        start..self.faces.len()
    }

    pub fn build(self) -> TriMesh {
        TriMesh::new(self.vertices, self.faces).expect("procedural mesh is valid")
    }
}

fn cuboid_builder(size: Vec3) -> MeshBuilder {
    let h = size * 0.5;
    let mut b = MeshBuilder::default();
    for i in 0..8u32 {
        let sx = if i & 1 == 0 { -h.x } else { h.x };
        let sy = if i & 2 == 0 { -h.y } else { h.y };
        let sz = if i & 4 == 0 { -h.z } else { h.z };
        b.vertex(Vec3::new(sx, sy, sz));
    }
    // vertex index bit k set = positive side on axis k
    b.quad(0, 2, 3, 1); // -z
    b.quad(4, 5, 7, 6); // +z
    b.quad(0, 1, 5, 4); // -y
    b.quad(2, 6, 7, 3); // +y
    b.quad(0, 4, 6, 2); // -x
    b.quad(1, 3, 7, 5); // +x
    b
}

/// Axis-aligned box centred at the origin.
pub fn cuboid(size: Vec3) -> TriMesh {
    cuboid_builder(size).build()
}

fn ellipsoid_builder(radii: Vec3, segments: usize, rings: usize) -> MeshBuilder {
    let segments = segments.max(3);
    let rings = rings.max(2);
    let mut b = MeshBuilder::default();
    let top = b.vertex(Vec3::new(0.0, 0.0, radii.z));
    let mut ring_start = Vec::with_capacity(rings - 1);
    for i in 1..rings {
        let theta = PI * i as f64 / rings as f64;
        let (st, ct) = theta.sin_cos();
        ring_start.push(b.vertices.len() as u32);
        for j in 0..segments {
            let phi = TAU * j as f64 / segments as f64;
            let (sp, cp) = phi.sin_cos();
            b.vertex(Vec3::new(radii.x * st * cp, radii.y * st * sp, radii.z * ct));
        }
    }
    let bottom = b.vertex(Vec3::new(0.0, 0.0, -radii.z));
    let s = segments as u32;
    for j in 0..s {
        let jn = (j + 1) % s;
        b.face(top, ring_start[0] + j, ring_start[0] + jn);
    }
    for r in 0..ring_start.len() - 1 {
        let (a0, a1) = (ring_start[r], ring_start[r + 1]);
        for j in 0..s {
            let jn = (j + 1) % s;
            b.quad(a0 + j, a1 + j, a1 + jn, a0 + jn);
        }
    }
    let last = *ring_start.last().unwrap_or(&0);
    for j in 0..s {
        let jn = (j + 1) % s;
        b.face(bottom, last + jn, last + j);
    }
    b
}

/// Latitude/longitude ellipsoid centred at the origin.
pub fn ellipsoid(radii: Vec3, segments: usize, rings: usize) -> TriMesh {
    ellipsoid_builder(radii, segments, rings).build()
}

pub fn uv_sphere(radius: f64, segments: usize, rings: usize) -> TriMesh {
    ellipsoid(Vec3::new(radius, radius, radius), segments, rings)
}

fn frustum_builder(r0: f64, r1: f64, length: f64, segments: usize) -> MeshBuilder {
    let segments = segments.max(3);
    let mut b = MeshBuilder::default();
    let s = segments as u32;
    let c0 = b.vertex(Vec3::ZERO);
    let c1 = b.vertex(Vec3::new(0.0, 0.0, length));
    let base = b.vertices.len() as u32;
    for j in 0..segments {
        let (sp, cp) = (TAU * j as f64 / segments as f64).sin_cos();
        b.vertex(Vec3::new(r0 * cp, r0 * sp, 0.0));
    }
    for j in 0..segments {
        let (sp, cp) = (TAU * j as f64 / segments as f64).sin_cos();
        b.vertex(Vec3::new(r1 * cp, r1 * sp, length));
    }
    for j in 0..s {
        let jn = (j + 1) % s;
        b.quad(base + j, base + jn, base + s + jn, base + s + j);
        b.face(c0, base + jn, base + j);
        b.face(c1, base + s + j, base + s + jn);
    }
    b
}

/// Closed truncated cone along +z from `z = 0` (radius `r0`) to `z = length`.
pub fn frustum(r0: f64, r1: f64, length: f64, segments: usize) -> TriMesh {
    frustum_builder(r0, r1, length, segments).build()
}

/// Tube of radius `minor` swept along a circular arc of radius `major` in the
/// xz-plane, from angle `a0` to `a1` (measured from +x towards +z), capped.
fn torus_arc_builder(major: f64, minor: f64, a0: f64, a1: f64, arc_steps: usize, tube_steps: usize) -> MeshBuilder {
    let arc_steps = arc_steps.max(1);
    let tube_steps = tube_steps.max(3);
    let mut b = MeshBuilder::default();
    let t = tube_steps as u32;
    let mut centers = Vec::new();
    for i in 0..=arc_steps {
        let a = a0 + (a1 - a0) * i as f64 / arc_steps as f64;
        let (sa, ca) = a.sin_cos();
        let center = Vec3::new(major * ca, 0.0, major * sa);
        let radial = Vec3::new(ca, 0.0, sa);
        centers.push(center);
        for k in 0..tube_steps {
            let (sb, cb) = (TAU * k as f64 / tube_steps as f64).sin_cos();
            b.vertex(center + radial * (minor * cb) + Vec3::Y * (minor * sb));
        }
    }
    for i in 0..arc_steps as u32 {
        for k in 0..t {
            let kn = (k + 1) % t;
            let (p0, p1) = (i * t, (i + 1) * t);
            b.quad(p0 + k, p0 + kn, p1 + kn, p1 + k);
        }
    }
    let start = b.vertex(centers[0]);
    let end = b.vertex(centers[arc_steps]);
    let last = arc_steps as u32 * t;
    for k in 0..t {
        let kn = (k + 1) % t;
        b.face(start, kn, k);
        b.face(end, last + k, last + kn);
    }
    b
}

/// Shape parameters of the toy teapot family (meters, radians).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeapotParams {
    pub body_radii: Vec3,
    pub handle_major: f64,
    pub handle_minor: f64,
    pub spout_length: f64,
    pub spout_radius: f64,
    /// Spout elevation above the horizontal.
    pub spout_tilt: f64,
    /// Tessellation multiplier.
    pub detail: usize,
}

impl Default for TeapotParams {
    fn default() -> Self {
        Self {
            body_radii: Vec3::new(0.06, 0.052, 0.045),
            handle_major: 0.032,
            handle_minor: 0.008,
            spout_length: 0.07,
            spout_radius: 0.013,
            spout_tilt: 0.7,
            detail: 1,
        }
    }
}

impl TeapotParams {
    /// A random member of the family around the defaults.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let d = Self::default();
        let s = rng.gen_range(0.8..1.25);
        Self {
            body_radii: Vec3::new(
                d.body_radii.x * s * rng.gen_range(0.9..1.1),
                d.body_radii.y * s * rng.gen_range(0.9..1.05),
                d.body_radii.z * s * rng.gen_range(0.85..1.15),
            ),
            handle_major: d.handle_major * s * rng.gen_range(0.85..1.15),
            handle_minor: d.handle_minor * rng.gen_range(0.85..1.2),
            spout_length: d.spout_length * s * rng.gen_range(0.8..1.2),
            spout_radius: d.spout_radius * rng.gen_range(0.85..1.15),
            spout_tilt: rng.gen_range(0.55..0.85),
            detail: d.detail,
        }
    }
}

/// A toy teapot with its part face ranges and reference keypoints.
#[derive(Debug, Clone)]
pub struct Teapot {
    pub mesh: TriMesh,
    pub body_faces: Range<usize>,
    pub handle_faces: Range<usize>,
    pub spout_faces: Range<usize>,
    /// Outermost point of the handle, where a gripper closes.
    pub affording_point: Vec3,
    /// Centre of the spout tip.
    pub function_point: Vec3,
}

/// Builds a teapot with its body centred at the origin, the handle on -x and
/// the spout rising towards +x.
pub fn toy_teapot(p: &TeapotParams) -> Teapot {
    let detail = p.detail.max(1);
    let mut b = MeshBuilder::default();
    let body = ellipsoid_builder(p.body_radii, 40 * detail, 20 * detail);
    let body_faces = b.append(&body, &Pose::IDENTITY);

    // handle arc centred just inside the body wall, bulging along -x
    let arc = torus_arc_builder(p.handle_major, p.handle_minor, -FRAC_PI_2 * 0.95, FRAC_PI_2 * 0.95, 16 * detail, 10 * detail);
    let handle_center = Vec3::new(-0.7 * p.body_radii.x, 0.0, 0.0);
    let flip = Pose::new(Quat::rot_z(PI), handle_center);
    let handle_faces = b.append(&arc, &flip);
    let affording_point = handle_center + Vec3::new(-(p.handle_major + p.handle_minor), 0.0, 0.0);

    // spout axis tilted up from +x
    let spout = frustum_builder(p.spout_radius, 0.5 * p.spout_radius, p.spout_length, 16 * detail);
    let dir = Vec3::new(p.spout_tilt.cos(), 0.0, p.spout_tilt.sin());
    let base = Vec3::new(p.body_radii.x * 0.75, 0.0, 0.0);
    let spout_pose = Pose::new(Quat::rot_y(FRAC_PI_2 - p.spout_tilt), base);
    let spout_faces = b.append(&spout, &spout_pose);
    let function_point = base + dir * p.spout_length;

    Teapot { mesh: b.build(), body_faces, handle_faces, spout_faces, affording_point, function_point }
}

/// Parallel-jaw gripper in the end-effector frame: fingers extend along +z to
/// the tool centre point at the origin and open along y.
pub fn gripper(opening: f64) -> TriMesh {
    let mut b = MeshBuilder::default();
    let gap = 0.008 + 0.07 * opening.clamp(0.0, 1.0);
    let finger = cuboid_builder(Vec3::new(0.018, 0.008, 0.05));
    for side in [-1.0, 1.0] {
        let c = Vec3::new(0.0, side * (0.5 * gap + 0.004), -0.02);
        b.append(&finger, &Pose::from_translation(c));
    }
    let palm = cuboid_builder(Vec3::new(0.03, gap + 0.03, 0.025));
    b.append(&palm, &Pose::from_translation(Vec3::new(0.0, 0.0, -0.0575)));
    b.build()
}

/// Closed cylinder standing on `z = 0`.
pub fn cup(radius: f64, height: f64) -> TriMesh {
    frustum(radius, radius * 1.1, height, 32)
}
