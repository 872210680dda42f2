//! Keypoint transfer between meshes by multi-view dense-descriptor matching.
//!
//! Both meshes are rendered from a ring of cameras scaled to their own
//! bounding radius. For every source vertex near the keypoint that a view
//! sees, its projected descriptor is matched by cosine similarity against the
//! target's foreground in the same view; the matched pixels are lifted back to
//! 3D and averaged with their similarities as weights.

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::geometry::Vec3;
use crate::mesh::TriMesh;
use crate::render::{self, Camera, DepthImage, Intrinsics, Rasterizer};
#[allow(unused_imports)]
use num_traits::Float;

/// Source taps whose face normal turns more than 60° from the sampled
/// vertex normal are left out of the bilinear sample.
pub const CREASE_COSINE: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorrespondenceError {
    #[error("target foreground mask is empty")]
    EmptyMask,
    #[error("no neighbour of the keypoint is visible in any view")]
    NoVisibleNeighbors,
    #[error("every match has non-positive weight")]
    ZeroWeight,
    #[error("descriptor map is {found:?}, expected {expected:?}")]
    ShapeMismatch { expected: (usize, usize), found: (usize, usize) },
    #[error("descriptor dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("invalid descriptor map: {0}")]
    InvalidMap(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("descriptor backend failed: {0}")]
    Backend(#[from] BackendError),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{message}")]
pub struct BackendError {
    pub message: String,
}

impl BackendError {
    pub fn new(message: impl Into<String>) -> BackendError {
        BackendError { message: message.into() }
    }
}

/// Dense `height × width × dim` feature image, row-major, channels last.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorMap {
    width: usize,
    height: usize,
    dim: usize,
    data: Vec<f32>,
}

impl DescriptorMap {
    pub fn new(width: usize, height: usize, dim: usize, data: Vec<f32>) -> Result<Self, CorrespondenceError> {
        if dim == 0 || width == 0 || height == 0 {
            return Err(CorrespondenceError::InvalidMap("dimensions must be positive"));
        }
        if data.len() != width * height * dim {
            return Err(CorrespondenceError::InvalidMap("data length does not match the header"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(CorrespondenceError::InvalidMap("non-finite value"));
        }
        Ok(Self { width, height, dim, data })
    }

    pub fn zeros(width: usize, height: usize, dim: usize) -> Self {
        Self { width, height, dim, data: alloc::vec![0.0; width * height * dim] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.dim;
        &self.data[i..i + self.dim]
    }

    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let i = (y * self.width + x) * self.dim;
        &mut self.data[i..i + self.dim]
    }

    /// Bilinear sample at sub-pixel `(u, v)`, clamped to the image.
    pub fn sample_bilinear(&self, u: f64, v: f64) -> Vec<f64> {
        self.sample_bilinear_where(u, v, |_, _| true)
    }

    /// Bilinear sample using only the taps for which `keep` holds, with the
    /// remaining weights renormalized. All zeros if no tap is kept.
    pub fn sample_bilinear_where(&self, u: f64, v: f64, keep: impl Fn(usize, usize) -> bool) -> Vec<f64> {
        let u = u.clamp(0.0, (self.width - 1) as f64);
        let v = v.clamp(0.0, (self.height - 1) as f64);
        let (x0, y0) = (u.floor() as usize, v.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (fx, fy) = (u - x0 as f64, v - y0 as f64);
        let mut out = alloc::vec![0.0; self.dim];
        let mut total = 0.0;
        for (x, y, w) in [
            (x0, y0, (1.0 - fx) * (1.0 - fy)),
            (x1, y0, fx * (1.0 - fy)),
            (x0, y1, (1.0 - fx) * fy),
            (x1, y1, fx * fy),
        ] {
            if w == 0.0 || !keep(x, y) {
                continue;
            }
            total += w;
            for (o, &d) in out.iter_mut().zip(self.get(x, y)) {
                *o += w * d as f64;
            }
        }
        if total > 0.0 && total != 1.0 {
            out.iter_mut().for_each(|o| *o /= total);
        }
        out
    }
}

/// A mesh rendered in its canonical frame, handed to a descriptor backend.
#[derive(Debug, Clone, Copy)]
pub struct RenderedView<'a> {
    pub mesh: &'a TriMesh,
    pub depth: &'a DepthImage,
    pub camera: &'a Camera,
    pub mesh_id: &'a str,
    pub view_index: usize,
}

/// Produces a descriptor map for a rendered view. Implementations must be
/// deterministic; those that cannot take concurrent calls report
/// `single_flight`.
pub trait DescriptorBackend {
    fn describe(&self, view: &RenderedView<'_>) -> Result<DescriptorMap, BackendError>;

    fn single_flight(&self) -> bool {
        false
    }

    /// Identity recorded in result files.
    fn name(&self) -> String {
        String::from("unnamed")
    }
}

/// Normalized surface position and outward normal, `D = 6`.
#[derive(Debug, Clone, Copy, Default)]
pub struct GeometricBackend;

impl DescriptorBackend for GeometricBackend {
    fn describe(&self, view: &RenderedView<'_>) -> Result<DescriptorMap, BackendError> {
        Ok(geometric_descriptors(view.mesh, view.depth, view.camera))
    }

    fn name(&self) -> String {
        String::from("geometric")
    }
}

/// Descriptor of every foreground pixel: the surface point divided by the
/// mesh bounding radius, then the interpolated unit normal turned to face the
/// camera. Background pixels are zero.
pub fn geometric_descriptors(mesh: &TriMesh, depth: &DepthImage, camera: &Camera) -> DescriptorMap {
    let normals = mesh.vertex_normals();
    let radius = mesh.bounding_radius().max(f64::MIN_POSITIVE);
    let mut map = DescriptorMap::zeros(depth.width(), depth.height(), 6);
    for y in 0..depth.height() {
        for x in 0..depth.width() {
            let Some(f) = depth.face(x, y) else { continue };
            let p = render::unproject(camera, x as f64, y as f64, depth.depth(x, y));
            let [a, b, c] = mesh.triangle(f as usize);
            let [la, lb, lc] = barycentric(p, a, b, c);
            let idx = mesh.faces()[f as usize];
            let mut n = normals[idx[0] as usize] * la + normals[idx[1] as usize] * lb + normals[idx[2] as usize] * lc;
            n = n.try_normalize().unwrap_or_else(|| mesh.face_normal(f as usize));
            if n.dot(camera.position() - p) < 0.0 {
                n = -n;
            }
            let q = p / radius;
            map.get_mut(x, y).copy_from_slice(&[q.x as f32, q.y as f32, q.z as f32, n.x as f32, n.y as f32, n.z as f32]);
        }
    }
    map
}

/// Barycentric coordinates of `p` projected onto the plane of `abc`,
/// clamped to the triangle.
fn barycentric(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> [f64; 3] {
    let (v0, v1, v2) = (b - a, c - a, p - a);
    let (d00, d01, d11) = (v0.dot(v0), v0.dot(v1), v1.dot(v1));
    let (d20, d21) = (v2.dot(v0), v2.dot(v1));
    let den = d00 * d11 - d01 * d01;
    if den.abs() < f64::MIN_POSITIVE {
        return [1.0 / 3.0; 3];
    }
    let v = ((d11 * d20 - d01 * d21) / den).max(0.0);
    let w = ((d00 * d21 - d01 * d20) / den).max(0.0);
    let u = (1.0 - v - w).max(0.0);
    let s = u + v + w;
    [u / s, v / s, w / s]
}

/// Descriptor map with every pixel scaled to unit length (zero stays zero).
#[derive(Debug, Clone)]
struct UnitMap {
    width: usize,
    dim: usize,
    data: Vec<f64>,
}

impl UnitMap {
    fn new(map: &DescriptorMap) -> UnitMap {
        let mut data: Vec<f64> = map.data.iter().map(|&v| v as f64).collect();
        for px in data.chunks_mut(map.dim) {
            let n = px.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                px.iter_mut().for_each(|v| *v /= n);
            }
        }
        UnitMap { width: map.width, dim: map.dim, data }
    }

    /// Row-major argmax of the dot product with unit `q` over `mask`.
    fn best(&self, q: &[f64], mask: &[bool]) -> Option<((usize, usize), f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, px) in self.data.chunks(self.dim).enumerate() {
            if !mask[i] {
                continue;
            }
            let s: f64 = px.iter().zip(q).map(|(a, b)| a * b).sum();
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        best.map(|(i, s)| ((i % self.width, i / self.width), s))
    }

}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.into_iter().map(|x| x / n).collect()
    } else {
        v
    }
}

/// Best match of the source descriptor at sub-pixel `u` among the target's
/// `mask` pixels: `(pixel, cosine similarity)`. Ties go to the first pixel in
/// row-major order.
pub fn match_pixel(
    src: &DescriptorMap,
    u: (f64, f64),
    tgt: &DescriptorMap,
    mask: &[bool],
) -> Result<((usize, usize), f64), CorrespondenceError> {
    if src.dim != tgt.dim {
        return Err(CorrespondenceError::DimensionMismatch(src.dim, tgt.dim));
    }
    if mask.len() != tgt.width * tgt.height {
        return Err(CorrespondenceError::ShapeMismatch { expected: (tgt.width, tgt.height), found: (mask.len(), 1) });
    }
    let q = unit(src.sample_bilinear(u.0, u.1));
    UnitMap::new(tgt).best(&q, mask).ok_or(CorrespondenceError::EmptyMask)
}

/// Rig and matching parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrespondenceParams {
    pub views: usize,
    pub elevation: f64,
    /// Camera distance as a multiple of the mesh bounding radius.
    pub radius_factor: f64,
    pub resolution: usize,
    pub focal: f64,
    /// Nearest source vertices used per keypoint.
    pub neighbors: usize,
    /// Matches with weight at or below this are dropped.
    pub min_weight: f64,
    /// Visibility depth tolerance in pixel footprints at the rig radius.
    pub visibility_tolerance_px: f64,
}

impl Default for CorrespondenceParams {
    fn default() -> Self {
        Self {
            views: 8,
            elevation: core::f64::consts::FRAC_PI_4,
            radius_factor: 2.5,
            resolution: 256,
            focal: 256.0,
            neighbors: 8,
            min_weight: 0.0,
            visibility_tolerance_px: 1.5,
        }
    }
}

impl CorrespondenceParams {
    pub fn validate(&self) -> Result<(), CorrespondenceError> {
        if self.views == 0 {
            return Err(CorrespondenceError::InvalidParameter("views must be >= 1"));
        }
        if self.neighbors == 0 {
            return Err(CorrespondenceError::InvalidParameter("neighbors must be >= 1"));
        }
        if !(self.radius_factor > 1.0) {
            return Err(CorrespondenceError::InvalidParameter("radius_factor must exceed 1"));
        }
        if self.resolution == 0 || !(self.focal > 0.0) {
            return Err(CorrespondenceError::InvalidParameter("resolution and focal must be positive"));
        }
        if !(self.min_weight >= 0.0) || !(self.visibility_tolerance_px >= 0.0) {
            return Err(CorrespondenceError::InvalidParameter("thresholds must be non-negative"));
        }
        Ok(())
    }

    /// Cameras for a mesh whose bounding radius is `radius`.
    pub fn rig(&self, radius: f64) -> Vec<Camera> {
        let k = Intrinsics::centered(self.resolution, self.focal);
        render::ring_rig(self.views, self.radius_factor * radius, self.elevation, Vec3::ZERO, k)
    }
}

/// Renders and descriptor maps of one mesh under the rig.
#[derive(Debug, Clone)]
pub struct ViewSet {
    pub cameras: Vec<Camera>,
    pub depths: Vec<DepthImage>,
    pub maps: Vec<DescriptorMap>,
    units: Vec<UnitMap>,
    masks: Vec<Vec<bool>>,
    distance: f64,
}

impl ViewSet {
    pub fn build(
        mesh: &TriMesh,
        mesh_id: &str,
        backend: &dyn DescriptorBackend,
        params: &CorrespondenceParams,
    ) -> Result<ViewSet, CorrespondenceError> {
        params.validate()?;
        let cameras = params.rig(mesh.bounding_radius());
        let mut raster = Rasterizer::new();
        let mut depths = Vec::with_capacity(cameras.len());
        let mut maps = Vec::with_capacity(cameras.len());
        for (i, cam) in cameras.iter().enumerate() {
            let depth = raster.render(mesh, &crate::geometry::Pose::IDENTITY, cam).clone();
            let view = RenderedView { mesh, depth: &depth, camera: cam, mesh_id, view_index: i };
            let map = backend.describe(&view)?;
            if (map.width, map.height) != (cam.width(), cam.height()) {
                return Err(CorrespondenceError::ShapeMismatch {
                    expected: (cam.width(), cam.height()),
                    found: (map.width, map.height),
                });
            }
            depths.push(depth);
            maps.push(map);
        }
        ViewSet::from_parts(cameras, depths, maps)
    }

    /// Assembles a view set from renders and maps produced elsewhere. The
    /// cameras are assumed to come from [`CorrespondenceParams::rig`].
    pub fn from_parts(cameras: Vec<Camera>, depths: Vec<DepthImage>, maps: Vec<DescriptorMap>) -> Result<ViewSet, CorrespondenceError> {
        if cameras.len() != depths.len() || cameras.len() != maps.len() || cameras.is_empty() {
            return Err(CorrespondenceError::InvalidParameter("cameras, depths and maps must pair up"));
        }
        for ((c, d), m) in cameras.iter().zip(&depths).zip(&maps) {
            if (d.width(), d.height()) != (c.width(), c.height()) || (m.width, m.height) != (c.width(), c.height()) {
                return Err(CorrespondenceError::ShapeMismatch { expected: (c.width(), c.height()), found: (m.width, m.height) });
            }
        }
        let distance = cameras[0].position().norm();
        let units = maps.iter().map(UnitMap::new).collect();
        let masks = depths.iter().map(|d| d.mask()).collect();
        Ok(ViewSet { cameras, depths, maps, units, masks, distance })
    }

    /// Distance from the cameras to the mesh origin.
    pub fn rig_distance(&self) -> f64 {
        self.distance
    }

    /// Metric pixel footprint at the rig distance.
    pub fn pixel_footprint(&self) -> f64 {
        self.cameras[0].pixel_footprint(self.distance)
    }
}

/// One (view, neighbour) match.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchRecord {
    pub view: usize,
    pub vertex: usize,
    pub source_pixel: (f64, f64),
    pub target_pixel: (usize, usize),
    /// Cosine similarity clamped at zero.
    pub weight: f64,
    pub candidate: Vec3,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ViewStats {
    pub visible_neighbors: usize,
    pub accepted: usize,
    pub mean_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Transferred keypoint in the target mesh frame.
    pub keypoint: Vec3,
    /// Mean weight of accepted matches.
    pub confidence: f64,
    pub records: Vec<MatchRecord>,
    pub per_view: Vec<ViewStats>,
}

/// Transfers `x` (source mesh frame) onto the target using prepared views.
pub fn transfer_keypoint_views(
    src_mesh: &TriMesh,
    src: &ViewSet,
    x: Vec3,
    tgt: &ViewSet,
    params: &CorrespondenceParams,
) -> Result<MatchResult, CorrespondenceError> {
    params.validate()?;
    if src.cameras.len() != tgt.cameras.len() {
        return Err(CorrespondenceError::InvalidParameter("source and target rigs differ in view count"));
    }
    let neighbors = src_mesh.nearest_vertices(x, params.neighbors);
    let tol = params.visibility_tolerance_px * src.pixel_footprint();
    let normals = src_mesh.vertex_normals();
    let mut records = Vec::new();
    let mut per_view = alloc::vec![ViewStats::default(); src.cameras.len()];
    for (view, cam) in src.cameras.iter().enumerate() {
        if src.maps[view].dim != tgt.maps[view].dim {
            return Err(CorrespondenceError::DimensionMismatch(src.maps[view].dim, tgt.maps[view].dim));
        }
        for &(vertex, v) in &neighbors {
            if !render::visible(&src.depths[view], cam, v, tol) {
                continue;
            }
            let (u, w, z) = render::project(cam, v).expect("visible points are in front of the camera");
            per_view[view].visible_neighbors += 1;
            // taps on another surface, across a crease or on the background would
            // blend unrelated descriptors
            let depth = &src.depths[view];
            let same_surface = |px: usize, py: usize| {
                depth.face(px, py).is_some_and(|f| {
                    (depth.depth(px, py) - z).abs() <= tol
                        && src_mesh.face_normal(f as usize).dot(normals[vertex]) >= CREASE_COSINE
                })
            };
            let q = unit(src.maps[view].sample_bilinear_where(u, w, same_surface));
            let Some((px, sim)) = tgt.units[view].best(&q, &tgt.masks[view]) else {
                continue;
            };
            let depth = tgt.depths[view].depth(px.0, px.1);
            let candidate = render::unproject(&tgt.cameras[view], px.0 as f64, px.1 as f64, depth);
            let weight = sim.max(0.0);
            let accepted = weight > params.min_weight;
            if accepted {
                per_view[view].accepted += 1;
                per_view[view].mean_weight += weight;
            }
            records.push(MatchRecord {
                view,
                vertex,
                source_pixel: (u, w),
                target_pixel: px,
                weight,
                candidate,
                accepted,
            });
        }
    }
    for s in &mut per_view {
        if s.accepted > 0 {
            s.mean_weight /= s.accepted as f64;
        }
    }
    if records.is_empty() {
        return Err(CorrespondenceError::NoVisibleNeighbors);
    }
    let mut sum = Vec3::ZERO;
    let mut total = 0.0;
    let mut count = 0usize;
    for r in records.iter().filter(|r| r.accepted) {
        sum += r.candidate * r.weight;
        total += r.weight;
        count += 1;
    }
    if !(total > 0.0) {
        return Err(CorrespondenceError::ZeroWeight);
    }
    Ok(MatchResult { keypoint: sum / total, confidence: total / count as f64, records, per_view })
}

/// Renders both meshes and transfers `x` from `src` to `tgt`.
pub fn transfer_keypoint(
    src: &TriMesh,
    x: Vec3,
    tgt: &TriMesh,
    backend: &dyn DescriptorBackend,
    params: &CorrespondenceParams,
) -> Result<MatchResult, CorrespondenceError> {
    let s = ViewSet::build(src, "source", backend, params)?;
    let t = ViewSet::build(tgt, "target", backend, params)?;
    transfer_keypoint_views(src, &s, x, &t, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives;
    use alloc::vec;

    fn map_from(w: usize, h: usize, f: impl Fn(usize, usize) -> [f32; 2]) -> DescriptorMap {
        let mut data = Vec::new();
        for y in 0..h {
            for x in 0..w {
                data.extend_from_slice(&f(x, y));
            }
        }
        DescriptorMap::new(w, h, 2, data).unwrap()
    }

    #[test]
    fn map_validation() {
        assert!(DescriptorMap::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(DescriptorMap::new(1, 1, 1, vec![f32::NAN]).is_err());
        assert!(DescriptorMap::new(0, 1, 1, vec![]).is_err());
    }

    #[test]
    fn bilinear_interpolates_and_clamps() {
        let m = map_from(2, 2, |x, y| [x as f32, y as f32]);
        assert_eq!(m.sample_bilinear(0.25, 0.75), vec![0.25, 0.75]);
        assert_eq!(m.sample_bilinear(5.0, -1.0), vec![1.0, 0.0]);
    }

    #[test]
    fn self_match_returns_same_pixel() {
        let m = map_from(5, 4, |x, y| {
            let a = (y * 5 + x) as f32 * 0.07;
            [a.cos() * 2.0, a.sin() * 2.0]
        });
        let mask = vec![true; 20];
        for y in 0..4 {
            for x in 0..5 {
                let (p, w) = match_pixel(&m, (x as f64, y as f64), &m, &mask).unwrap();
                assert_eq!(p, (x, y));
                assert!((w - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn planted_match_and_ties() {
        let src = map_from(3, 3, |_, _| [1.0, 0.0]);
        let tgt = map_from(3, 3, |x, y| if (x, y) == (2, 1) { [3.0, 0.0] } else { [0.0, 1.0] });
        let mask = vec![true; 9];
        assert_eq!(match_pixel(&src, (0.0, 0.0), &tgt, &mask).unwrap(), ((2, 1), 1.0));
        let flat = map_from(3, 3, |_, _| [0.0, 1.0]);
        let mut mask = vec![false; 9];
        mask[4] = true;
        mask[7] = true;
        assert_eq!(match_pixel(&src, (0.0, 0.0), &flat, &mask).unwrap(), ((1, 1), 0.0));
        assert_eq!(match_pixel(&src, (0.0, 0.0), &flat, &[false; 9]), Err(CorrespondenceError::EmptyMask));
    }

    #[test]
    fn sphere_pole_descriptor() {
        let sphere = primitives::uv_sphere(1.0, 64, 32);
        let params = CorrespondenceParams { views: 1, elevation: core::f64::consts::FRAC_PI_2, ..Default::default() };
        let set = ViewSet::build(&sphere, "s", &GeometricBackend, &params).unwrap();
        let k = set.cameras[0].intrinsics;
        let d = set.maps[0].sample_bilinear(k.cx, k.cy);
        let expected = [0.0, 0.0, 1.0, 0.0, 0.0, 1.0];
        for (a, b) in d.iter().zip(expected) {
            assert!((a - b).abs() < 1e-3, "{d:?}");
        }
        for px in set.maps[0].data().chunks(6) {
            let n2: f64 = px.iter().map(|&v| (v as f64) * (v as f64)).sum();
            assert!(n2 <= 2.0 + 1e-5);
        }
    }

    #[test]
    fn single_candidate_is_returned_exactly() {
        let mesh = primitives::uv_sphere(0.05, 48, 24);
        let params = CorrespondenceParams { views: 1, neighbors: 1, resolution: 64, focal: 64.0, ..Default::default() };
        let set = ViewSet::build(&mesh, "m", &GeometricBackend, &params).unwrap();
        let x = set.cameras[0].position().normalized() * 0.05;
        let r = transfer_keypoint_views(&mesh, &set, x, &set, &params).unwrap();
        assert_eq!(r.records.len(), 1);
        assert_eq!(r.keypoint, r.records[0].candidate);
    }
}
