//! Triangle meshes: validation, PCA canonicalization and geometric queries.

use alloc::vec::Vec;
use core::cmp::Ordering;

use thiserror::Error;

use crate::geometry::{Mat3, Pose, Quat, Vec3};
use crate::linalg::symmetric_eigen3;
#[allow(unused_imports)]
use num_traits::Float;


/// Faces with area at or below this (m^2) are rejected.
pub const MIN_FACE_AREA: f64 = 1e-12;

/// Relative eigenvalue gap under which principal axes are not unique.
pub const EIGEN_DEGENERACY: f64 = 1e-9;

/// Relative long/middle eigenvalue gap that triggers a quarter-turn warning.
pub const QUARTER_TURN_WARNING: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("mesh has no vertices or faces")]
    Empty,
    #[error("face {face} references vertex {index} but the mesh has {vertex_count}")]
    IndexOutOfRange { face: usize, index: u32, vertex_count: usize },
    #[error("face {face} is degenerate (area {area:e} m^2)")]
    DegenerateMesh { face: usize, area: f64 },
    #[error("vertex {0} is not finite")]
    NonFinite(usize),
    #[error("principal axes are not unique (eigenvalues {eigenvalues:?})")]
    DegenerateCovariance { eigenvalues: [f64; 3] },
}

/// Uniform grid over the vertices for nearest-neighbour queries.
#[derive(Debug, Clone, PartialEq)]
struct VertexGrid {
    origin: Vec3,
    cell: f64,
    dims: [i64; 3],
    /// CSR layout: vertices of cell `c` are `order[starts[c]..starts[c + 1]]`.
    starts: Vec<u32>,
    order: Vec<u32>,
}

impl VertexGrid {
    fn build(vertices: &[Vec3]) -> Self {
        let (lo, hi) = bounds(vertices);
        let extent = hi - lo;
        let longest = extent.x.max(extent.y).max(extent.z).max(1e-9);
        let per_axis = (vertices.len() as f64).cbrt().ceil().clamp(1.0, 64.0);
        let cell = longest / per_axis;
        let dims = [
            ((extent.x / cell).floor() as i64 + 1).max(1),
            ((extent.y / cell).floor() as i64 + 1).max(1),
            ((extent.z / cell).floor() as i64 + 1).max(1),
        ];
        let n_cells = (dims[0] * dims[1] * dims[2]) as usize;
        let mut grid = VertexGrid { origin: lo, cell, dims, starts: alloc::vec![0; n_cells + 1], order: Vec::new() };
        let cells: Vec<usize> = vertices.iter().map(|v| grid.flat(grid.cell_of(*v))).collect();
        for &c in &cells {
            grid.starts[c + 1] += 1;
        }
        for c in 0..n_cells {
            grid.starts[c + 1] += grid.starts[c];
        }
        let mut fill = grid.starts.clone();
        grid.order = alloc::vec![0; vertices.len()];
        for (i, &c) in cells.iter().enumerate() {
            grid.order[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        grid
    }

    fn cell_of(&self, p: Vec3) -> [i64; 3] {
        let r = (p - self.origin) / self.cell;
        [
            (r.x.floor() as i64).clamp(0, self.dims[0] - 1),
            (r.y.floor() as i64).clamp(0, self.dims[1] - 1),
            (r.z.floor() as i64).clamp(0, self.dims[2] - 1),
        ]
    }

    fn flat(&self, c: [i64; 3]) -> usize {
        ((c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]) as usize
    }

    fn cell_vertices(&self, c: [i64; 3]) -> &[u32] {
        let f = self.flat(c);
        &self.order[self.starts[f] as usize..self.starts[f + 1] as usize]
    }

    /// Lower bound on the distance from `p` to any point of a cell whose
    /// Chebyshev index distance from `center` exceeds `r`.
    fn ring_bound(&self, p: Vec3, center: [i64; 3], r: i64) -> f64 {
        let mut best = f64::INFINITY;
        for axis in 0..3 {
            let lo = self.origin[axis] + (center[axis] - r) as f64 * self.cell;
            let hi = self.origin[axis] + (center[axis] + r + 1) as f64 * self.cell;
            best = best.min(p[axis] - lo).min(hi - p[axis]);
        }
        best.max(0.0)
    }
}

fn bounds(vertices: &[Vec3]) -> (Vec3, Vec3) {
    let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut hi = -lo;
    for v in vertices {
        lo = lo.component_min(*v);
        hi = hi.component_max(*v);
    }
    (lo, hi)
}

/// Triangle mesh in meters with its canonicalization record.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[u32; 3]>,
    canonical_pose: Pose,
    scale_to_canonical: f64,
    grid: VertexGrid,
}

/// Diagnostics of a PCA canonicalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcaReport {
    /// Vertex covariance eigenvalues, descending (long, middle, short).
    pub eigenvalues: [f64; 3],
    /// Long and middle extents within 5%: the in-plane orientation may be a
    /// quarter turn off and a manual pose is advisable.
    pub quarter_turn_ambiguous: bool,
}

impl TriMesh {
    /// Validates indices, finiteness and face areas.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        if vertices.is_empty() || faces.is_empty() {
            return Err(MeshError::Empty);
        }
        if let Some(i) = vertices.iter().position(|v| !v.is_finite()) {
            return Err(MeshError::NonFinite(i));
        }
        for (fi, f) in faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&i| i as usize >= vertices.len()) {
                return Err(MeshError::IndexOutOfRange { face: fi, index: bad, vertex_count: vertices.len() });
            }
            let [a, b, c] = f.map(|i| vertices[i as usize]);
            let area = 0.5 * (b - a).cross(c - a).norm();
            if !(area > MIN_FACE_AREA) {
                return Err(MeshError::DegenerateMesh { face: fi, area });
            }
        }
        let grid = VertexGrid::build(&vertices);
        Ok(Self { vertices, faces, canonical_pose: Pose::IDENTITY, scale_to_canonical: 1.0, grid })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    /// Transform from the frame the mesh was loaded in to its current frame.
    pub fn canonical_pose(&self) -> Pose {
        self.canonical_pose
    }

    pub fn scale_to_canonical(&self) -> f64 {
        self.scale_to_canonical
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        self.faces[face].map(|i| self.vertices[i as usize])
    }

    /// Unit normal following the face winding.
    pub fn face_normal(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.triangle(face);
        (b - a).cross(c - a).normalized()
    }

    /// Area-weighted vertex normals.
    pub fn vertex_normals(&self) -> Vec<Vec3> {
        let mut n = alloc::vec![Vec3::ZERO; self.vertices.len()];
        for f in &self.faces {
            let [a, b, c] = f.map(|i| self.vertices[i as usize]);
            let w = (b - a).cross(c - a);
            for &i in f {
                n[i as usize] += w;
            }
        }
        n.into_iter().map(|v| v.normalized()).collect()
    }

    pub fn centroid(&self) -> Vec3 {
        let mut c = Vec3::ZERO;
        for v in &self.vertices {
            c += *v;
        }
        c / self.vertices.len() as f64
    }

    pub fn aabb(&self) -> (Vec3, Vec3) {
        bounds(&self.vertices)
    }

    /// Radius of the smallest origin-centred sphere containing every vertex.
    pub fn bounding_radius(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                0.5 * (b - a).cross(c - a).norm()
            })
            .sum()
    }

    /// Rigidly moves the vertices; the canonical record accumulates `pose`.
    pub fn transformed(&self, pose: &Pose) -> TriMesh {
        let vertices: Vec<Vec3> = self.vertices.iter().map(|v| pose.apply_point(*v)).collect();
        let grid = VertexGrid::build(&vertices);
        TriMesh {
            vertices,
            faces: self.faces.clone(),
            canonical_pose: pose.compose(&self.canonical_pose),
            scale_to_canonical: self.scale_to_canonical,
            grid,
        }
    }

    /// Uniformly scaled copy about the current origin.
    pub fn scaled(&self, s: f64) -> Result<TriMesh, MeshError> {
        TriMesh::new(self.vertices.iter().map(|v| *v * s).collect(), self.faces.clone())
    }

    /// Concatenation of two meshes in the same frame.
    pub fn merged(&self, other: &TriMesh) -> Result<TriMesh, MeshError> {
        let offset = self.vertices.len() as u32;
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut faces = self.faces.clone();
        faces.extend(other.faces.iter().map(|f| f.map(|i| i + offset)));
        TriMesh::new(vertices, faces)
    }

    /// Moves the vertex centroid to the origin and aligns the principal axes
    /// with the world axes: shortest to z first, then longest to x, with y
    /// completing a right-handed frame.
    ///
    /// The sign of x and z is chosen so the third moment of the vertex
    /// coordinates along the axis is non-negative; symmetric shapes fall back
    /// to the axis' largest raw component being positive.
    pub fn canonicalize_pca(&self) -> Result<(TriMesh, PcaReport), MeshError> {
        let c = self.centroid();
        let n = self.vertices.len() as f64;
        let mut cov: Mat3 = [[0.0; 3]; 3];
        for v in &self.vertices {
            let d = (*v - c).to_array();
            for i in 0..3 {
                for j in 0..3 {
                    cov[i][j] += d[i] * d[j];
                }
            }
        }
        for row in cov.iter_mut() {
            for e in row.iter_mut() {
                *e /= n;
            }
        }
        let (values, vectors) = symmetric_eigen3(&cov);
        let top = values[0].abs().max(1e-300);
        if (values[0] - values[1]).abs() <= EIGEN_DEGENERACY * top
            || (values[1] - values[2]).abs() <= EIGEN_DEGENERACY * top
        {
            return Err(MeshError::DegenerateCovariance { eigenvalues: values });
        }

        let skew_tol = 1e-9 * top.powf(1.5);
        let orient = |axis: Vec3| -> Vec3 {
            let skew = self.vertices.iter().map(|v| (*v - c).dot(axis).powi(3)).sum::<f64>() / n;
            if skew.abs() > skew_tol {
                return if skew > 0.0 { axis } else { -axis };
            }
            let comps = axis.to_array();
            let mut k = 0;
            for i in 1..3 {
                if comps[i].abs() > comps[k].abs() + 1e-12 {
                    k = i;
                }
            }
            if comps[k] < 0.0 {
                -axis
            } else {
                axis
            }
        };
        let z_axis = orient(vectors[2]);
        let x_axis = orient(vectors[0]);
        let x_axis = (x_axis - z_axis * x_axis.dot(z_axis)).normalized();
        let y_axis = z_axis.cross(x_axis);
        // rows of the raw -> canonical rotation are the axes
        let rotation = Quat::from_axes(x_axis, y_axis, z_axis).inverse();
        let applied = Pose::new(rotation, -rotation.rotate(c));
        let mut out = self.transformed(&applied);
        let r = out.bounding_radius();
        out.scale_to_canonical = if r > 0.0 { 1.0 / r } else { 1.0 };
        let report = PcaReport {
            eigenvalues: values,
            quarter_turn_ambiguous: (values[0] - values[1]) < QUARTER_TURN_WARNING * values[0],
        };
        Ok((out, report))
    }

    /// The `m` vertices closest to `x`, nearest first, ties by index.
    pub fn nearest_vertices(&self, x: Vec3, m: usize) -> Vec<(usize, Vec3)> {
        let m = m.min(self.vertices.len());
        if m == 0 {
            return Vec::new();
        }
        let g = &self.grid;
        let center = g.cell_of(x);
        let max_r = (0..3).map(|a| center[a].max(g.dims[a] - 1 - center[a])).max().unwrap_or(0);
        let mut cand: Vec<(f64, u32)> = Vec::new();
        for r in 0..=max_r {
            for cz in (center[2] - r).max(0)..=(center[2] + r).min(g.dims[2] - 1) {
                for cy in (center[1] - r).max(0)..=(center[1] + r).min(g.dims[1] - 1) {
                    for cx in (center[0] - r).max(0)..=(center[0] + r).min(g.dims[0] - 1) {
                        let cheb = (cx - center[0]).abs().max((cy - center[1]).abs()).max((cz - center[2]).abs());
                        if cheb != r {
                            continue;
                        }
                        for &vi in g.cell_vertices([cx, cy, cz]) {
                            cand.push((self.vertices[vi as usize].distance_squared(x), vi));
                        }
                    }
                }
            }
            if cand.len() >= m {
                let (_, kth, _) = cand.select_nth_unstable_by(m - 1, cmp_candidate);
                let bound = g.ring_bound(x, center, r);
                if kth.0.sqrt() < bound {
                    break;
                }
            }
        }
        cand.sort_unstable_by(cmp_candidate);
        cand.truncate(m);
        cand.into_iter().map(|(_, i)| (i as usize, self.vertices[i as usize])).collect()
    }

    /// Exact unsigned distance from `x` to the surface.
    pub fn surface_distance(&self, x: Vec3) -> f64 {
        (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                closest_point_on_triangle(x, a, b, c).distance_squared(x)
            })
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }

    /// Distance from `x` to the faces in `faces` only.
    pub fn surface_distance_to(&self, x: Vec3, faces: core::ops::Range<usize>) -> f64 {
        faces
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                closest_point_on_triangle(x, a, b, c).distance_squared(x)
            })
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }
}

fn cmp_candidate(a: &(f64, u32), b: &(f64, u32)) -> Ordering {
    a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
}

/// Closest point of triangle `abc` to `p` (Voronoi-region walk).
pub fn closest_point_on_triangle(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives;
    use alloc::vec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sorted_vertices(m: &TriMesh) -> Vec<[i64; 3]> {
        let mut v: Vec<[i64; 3]> = m.vertices().iter().map(|p| p.to_array().map(|c| (c * 1e6).round() as i64)).collect();
        v.sort_unstable();
        v
    }

    #[test]
    fn validation_errors() {
        let v = vec![Vec3::ZERO, Vec3::X, Vec3::Y];
        assert!(TriMesh::new(v.clone(), vec![[0, 1, 2]]).is_ok());
        assert!(matches!(TriMesh::new(v.clone(), vec![[0, 1, 3]]), Err(MeshError::IndexOutOfRange { index: 3, .. })));
        assert!(matches!(TriMesh::new(v.clone(), vec![[0, 1, 1]]), Err(MeshError::DegenerateMesh { .. })));
        let collinear = vec![Vec3::ZERO, Vec3::X, Vec3::X * 2.0];
        assert!(matches!(TriMesh::new(collinear, vec![[0, 1, 2]]), Err(MeshError::DegenerateMesh { .. })));
        assert_eq!(TriMesh::new(vec![], vec![]), Err(MeshError::Empty));
    }

    #[test]
    fn cube_counts() {
        let cube = primitives::cuboid(Vec3::new(1.0, 1.0, 1.0));
        assert_eq!(cube.vertices().len(), 8);
        assert_eq!(cube.faces().len(), 12);
    }

    #[test]
    fn axis_aligned_box_is_already_canonical() {
        let b = primitives::cuboid(Vec3::new(4.0, 2.0, 1.0));
        let (c, report) = b.canonicalize_pca().unwrap();
        assert_eq!(sorted_vertices(&c), sorted_vertices(&b));
        assert!(report.eigenvalues[0] > report.eigenvalues[1] && report.eigenvalues[1] > report.eigenvalues[2]);
        assert!(!report.quarter_turn_ambiguous);
        // variances of +-2, +-1, +-0.5
        for (got, want) in report.eigenvalues.iter().zip([4.0, 1.0, 0.25]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn rotated_box_canonicalizes_back() {
        let b = primitives::cuboid(Vec3::new(4.0, 2.0, 1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let q = Quat::from_wxyz(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let t = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let moved = b.transformed(&Pose::new(q, t));
            let (c, _) = moved.canonicalize_pca().unwrap();
            assert_eq!(sorted_vertices(&c), sorted_vertices(&b));
            assert!(c.centroid().norm() < 1e-6);
            // the record maps the loaded frame onto the canonical one
            for (raw, canon) in moved.vertices().iter().zip(c.vertices()) {
                assert!(c.canonical_pose().compose(&moved.canonical_pose().inverse()).apply_point(*raw).distance(*canon) < 1e-9);
            }
        }
    }

    #[test]
    fn sphere_is_degenerate() {
        let s = primitives::uv_sphere(1.0, 24, 12);
        assert!(matches!(s.canonicalize_pca(), Err(MeshError::DegenerateCovariance { .. })));
    }

    #[test]
    fn quarter_turn_warning() {
        let b = primitives::cuboid(Vec3::new(2.0, 1.96, 1.0));
        assert!(b.canonicalize_pca().unwrap().1.quarter_turn_ambiguous);
    }

    #[test]
    fn canonicalization_is_idempotent_on_asymmetric_shape() {
        let t = primitives::toy_teapot(&primitives::TeapotParams::default()).mesh;
        let moved = t.transformed(&Pose::new(Quat::from_axis_angle(Vec3::new(1.0, 2.0, -0.5), 1.3), Vec3::new(0.3, 0.1, -0.2)));
        let (c1, _) = moved.canonicalize_pca().unwrap();
        let (c2, _) = c1.canonicalize_pca().unwrap();
        for (a, b) in c1.vertices().iter().zip(c2.vertices()) {
            assert!(a.distance(*b) < 1e-9);
        }
        let (direct, _) = t.canonicalize_pca().unwrap();
        for (a, b) in c1.vertices().iter().zip(direct.vertices()) {
            assert!(a.distance(*b) < 1e-6, "rigid motion changed the canonical frame");
        }
    }

    #[test]
    fn nearest_vertices_examples() {
        let cube = primitives::cuboid(Vec3::new(1.0, 1.0, 1.0));
        let v3 = cube.vertices()[3];
        assert_eq!(cube.nearest_vertices(v3, 1), vec![(3, v3)]);
        let all = cube.nearest_vertices(Vec3::new(0.1, 0.2, 0.3), 8);
        assert_eq!(all.len(), 8);
        let d: Vec<f64> = all.iter().map(|(_, p)| p.distance(Vec3::new(0.1, 0.2, 0.3))).collect();
        assert!(d.windows(2).all(|w| w[0] <= w[1]));
        // +z face centre: its four corners tie at distance sqrt(0.5); ordered by index
        let top = cube.nearest_vertices(Vec3::new(0.0, 0.0, 0.5), 4);
        let mut idx: Vec<usize> = top.iter().map(|(i, _)| *i).collect();
        assert!(top.iter().all(|(_, p)| (p.z - 0.5).abs() < 1e-12));
        let sorted = {
            let mut s = idx.clone();
            s.sort_unstable();
            s
        };
        assert_eq!(idx, sorted);
        idx.dedup();
        assert_eq!(idx.len(), 4);
    }

    #[test]
    fn surface_distance_examples() {
        let cube = primitives::cuboid(Vec3::new(1.0, 1.0, 1.0));
        assert_eq!(cube.surface_distance(cube.vertices()[0]), 0.0);
        assert!((cube.surface_distance(Vec3::new(0.0, 0.0, 1.5)) - 1.0).abs() < 1e-12);
        assert!((cube.surface_distance(Vec3::ZERO) - 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn nearest_vertices_match_brute_force(seed in 0u64..1000, m in 1usize..20,
                                              x in -0.3f64..0.3, y in -0.3f64..0.3, z in -0.3f64..0.3) {
            let _ = seed;
            let mesh = primitives::toy_teapot(&primitives::TeapotParams::default()).mesh;
            let q = Vec3::new(x, y, z);
            let got = mesh.nearest_vertices(q, m);
            let mut brute: Vec<(f64, usize)> = mesh.vertices().iter().enumerate().map(|(i, v)| (v.distance_squared(q), i)).collect();
            brute.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let want: Vec<usize> = brute[..m].iter().map(|(_, i)| *i).collect();
            let got_idx: Vec<usize> = got.iter().map(|(i, _)| *i).collect();
            prop_assert_eq!(got_idx, want);
        }

        #[test]
        fn closest_point_beats_samples(px in -2.0f64..2.0, py in -2.0f64..2.0, pz in -2.0f64..2.0) {
            let (a, b, c) = (Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.2, 0.0), Vec3::new(0.3, 0.9, 0.4));
            let p = Vec3::new(px, py, pz);
            let d = closest_point_on_triangle(p, a, b, c).distance(p);
            for i in 0..=20 {
                for j in 0..=(20 - i) {
                    let (u, v) = (i as f64 / 20.0, j as f64 / 20.0);
                    let s = a + (b - a) * u + (c - a) * v;
                    prop_assert!(d <= s.distance(p) + 1e-12);
                }
            }
        }
    }
}
