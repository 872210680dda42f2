//! Segmented point clouds: workspace cropping, DBSCAN outlier removal,
//! farthest point sampling and the hybrid real/simulated frame assembly used
//! for synthesized observations.

use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::demo::SkillRange;
use crate::geometry::Vec3;
#[allow(unused_imports)]
use num_traits::Float;


/// Default cloud size of an observation frame.
pub const DEFAULT_CLOUD_SIZE: usize = 1024;

/// DBSCAN core-point threshold used by the preprocessing pipeline.
pub const DEFAULT_MIN_PTS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CloudError {
    #[error("no points left after filtering")]
    EmptyResult,
    #[error("cannot sample {requested} points from a cloud of {available}")]
    TooFewPoints { requested: usize, available: usize },
    #[error("frame index {index} outside source demonstration of {len} frames")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("point {0} is not finite")]
    NonFinite(usize),
    #[error("{points} points but {labels} labels")]
    LengthMismatch { points: usize, labels: usize },
    #[error("invalid label code {0}")]
    InvalidLabel(u8),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

/// Semantic class of a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Label {
    Robot = 0,
    Object = 1,
    Goal = 2,
    Other = 3,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::Robot, Label::Object, Label::Goal, Label::Other];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Label, CloudError> {
        match code {
            0 => Ok(Label::Robot),
            1 => Ok(Label::Object),
            2 => Ok(Label::Goal),
            3 => Ok(Label::Other),
            c => Err(CloudError::InvalidLabel(c)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Robot => "robot",
            Label::Object => "object",
            Label::Goal => "goal",
            Label::Other => "other",
        }
    }
}

/// Points in meters (world frame) with one label each.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SegmentedPointCloud {
    points: Vec<[f32; 3]>,
    labels: Vec<Label>,
}

impl SegmentedPointCloud {
    pub fn new(points: Vec<[f32; 3]>, labels: Vec<Label>) -> Result<Self, CloudError> {
        if points.len() != labels.len() {
            return Err(CloudError::LengthMismatch { points: points.len(), labels: labels.len() });
        }
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(CloudError::NonFinite(i));
        }
        Ok(Self { points, labels })
    }

    /// Cloud with a single label on every point.
    pub fn uniform(points: Vec<[f32; 3]>, label: Label) -> Result<Self, CloudError> {
        let labels = alloc::vec![label; points.len()];
        Self::new(points, labels)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f32; 3]] {
        &self.points
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = ([f32; 3], Label)> + '_ {
        self.points.iter().copied().zip(self.labels.iter().copied())
    }

    /// Sub-cloud of the given indices, in that order.
    pub fn select(&self, indices: &[usize]) -> SegmentedPointCloud {
        SegmentedPointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn filter_labels(&self, keep: impl Fn(Label) -> bool) -> SegmentedPointCloud {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(self.labels[i])).collect();
        self.select(&idx)
    }

    pub fn extend(&mut self, other: &SegmentedPointCloud) {
        self.points.extend_from_slice(&other.points);
        self.labels.extend_from_slice(&other.labels);
    }

    pub fn push(&mut self, point: [f32; 3], label: Label) -> Result<(), CloudError> {
        if !point.iter().all(|c| c.is_finite()) {
            return Err(CloudError::NonFinite(self.len()));
        }
        self.points.push(point);
        self.labels.push(label);
        Ok(())
    }

    pub fn label_histogram(&self) -> [usize; 4] {
        let mut h = [0; 4];
        for l in &self.labels {
            h[l.code() as usize] += 1;
        }
        h
    }
}

/// Axis-aligned box in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Workspace {
    min: Vec3,
    max: Vec3,
}

impl Workspace {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self, CloudError> {
        if min.x < max.x && min.y < max.y && min.z < max.z {
            Ok(Self { min, max })
        } else {
            Err(CloudError::InvalidParameter("workspace min must be below max on every axis"))
        }
    }

    pub fn min(&self) -> Vec3 {
        self.min
    }

    pub fn max(&self) -> Vec3 {
        self.max
    }

    pub fn contains(&self, p: Vec3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }
}

/// Keeps the points inside `workspace` (boundary inclusive).
pub fn crop(cloud: &SegmentedPointCloud, workspace: &Workspace) -> Result<SegmentedPointCloud, CloudError> {
    let idx: Vec<usize> =
        (0..cloud.len()).filter(|&i| workspace.contains(Vec3::from_f32(cloud.points[i]))).collect();
    if idx.is_empty() {
        return Err(CloudError::EmptyResult);
    }
    Ok(cloud.select(&idx))
}

#[inline]
fn dist2(a: [f32; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] as f64 - b[0];
    let dy = a[1] as f64 - b[1];
    let dz = a[2] as f64 - b[2];
    dx * dx + dy * dy + dz * dz
}

#[inline]
fn widen(p: [f32; 3]) -> [f64; 3] {
    [p[0] as f64, p[1] as f64, p[2] as f64]
}

const LEAF: usize = 64;

/// Contiguous run of the point order with its bounding box and current
/// farthest point.
struct Bucket {
    start: usize,
    end: usize,
    lo: [f64; 3],
    hi: [f64; 3],
    best: (f64, usize),
}

impl Bucket {
    /// Squared distance from `c` to the box, computed so that it never
    /// exceeds the computed squared distance to any point inside.
    fn lower_bound(&self, c: [f64; 3]) -> f64 {
        let mut s = 0.0;
        for k in 0..3 {
            let g = if c[k] < self.lo[k] {
                self.lo[k] - c[k]
            } else if c[k] > self.hi[k] {
                c[k] - self.hi[k]
            } else {
                0.0
            };
            s += g * g;
        }
        s
    }
}

/// Larger distance first, then lower index.
#[inline]
fn farther(a: (f64, usize), b: (f64, usize)) -> (f64, usize) {
    if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

fn split_buckets(pts: &[[f64; 3]], order: &mut [usize], offset: usize, out: &mut Vec<Bucket>) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        for k in 0..3 {
            lo[k] = lo[k].min(pts[i][k]);
            hi[k] = hi[k].max(pts[i][k]);
        }
    }
    if order.len() <= LEAF {
        out.push(Bucket {
            start: offset,
            end: offset + order.len(),
            lo,
            hi,
            best: (f64::INFINITY, usize::MAX),
        });
        return;
    }
    let axis = (0..3).fold(0, |a, k| if hi[k] - lo[k] > hi[a] - lo[a] { k } else { a });
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b)));
    let (left, right) = order.split_at_mut(mid);
    split_buckets(pts, left, offset, out);
    split_buckets(pts, right, offset + mid, out);
}

/// Greedy farthest point sampling; returns indices in selection order.
///
/// The first pick is the point farthest from the centroid, so the result is
/// a pure function of the input. Ties go to the lowest index.
pub fn fps_indices(points: &[[f32; 3]], n: usize) -> Result<Vec<usize>, CloudError> {
    if n == 0 {
        return Err(CloudError::InvalidParameter("fps target count must be at least 1"));
    }
    if points.len() < n {
        return Err(CloudError::TooFewPoints { requested: n, available: points.len() });
    }
    let mut centroid = [0.0f64; 3];
    for p in points {
        for k in 0..3 {
            centroid[k] += p[k] as f64;
        }
    }
    let inv = 1.0 / points.len() as f64;
    centroid = centroid.map(|c| c * inv);

    let mut first = 0;
    let mut best = f64::NEG_INFINITY;
    for (i, p) in points.iter().enumerate() {
        let d = dist2(*p, centroid);
        if d > best {
            best = d;
            first = i;
        }
    }

    let wide: Vec<[f64; 3]> = points.iter().map(|p| widen(*p)).collect();
    let mut order: Vec<usize> = (0..points.len()).collect();
    let mut buckets = Vec::new();
    split_buckets(&wide, &mut order, 0, &mut buckets);
    let pts: Vec<[f64; 3]> = order.iter().map(|&i| wide[i]).collect();
    let mut bucket_of = alloc::vec![0; points.len()];
    for (b, bucket) in buckets.iter().enumerate() {
        for &i in &order[bucket.start..bucket.end] {
            bucket_of[i] = b;
        }
    }
    // min squared distance to the selected set, in bucket order; -1 marks
    // selected, which the min update never raises
    let mut min_d: Vec<f64> = alloc::vec![f64::INFINITY; points.len()];
    let mut selected = Vec::with_capacity(n);
    let mut current = first;
    loop {
        selected.push(current);
        if selected.len() == n {
            break;
        }
        let c = wide[current];
        let home = bucket_of[current];
        let mut next = (f64::NEG_INFINITY, usize::MAX);
        for (b, bucket) in buckets.iter_mut().enumerate() {
            // no point of the bucket can get closer than its box
            if b != home && bucket.lower_bound(c) >= bucket.best.0 {
                next = farther(next, bucket.best);
                continue;
            }
            let mut best = (f64::NEG_INFINITY, usize::MAX);
            for i in bucket.start..bucket.end {
                let m = if order[i] == current {
                    -1.0
                } else {
                    let p = pts[i];
                    let (dx, dy, dz) = (p[0] - c[0], p[1] - c[1], p[2] - c[2]);
                    let d = dx * dx + dy * dy + dz * dz;
                    if d < min_d[i] { d } else { min_d[i] }
                };
                min_d[i] = m;
                best = farther(best, (m, order[i]));
            }
            bucket.best = best;
            next = farther(next, best);
        }
        current = next.1;
    }
    Ok(selected)
}

/// Downsamples to exactly `n` points by farthest point sampling.
pub fn fps(cloud: &SegmentedPointCloud, n: usize) -> Result<SegmentedPointCloud, CloudError> {
    let idx = fps_indices(&cloud.points, n)?;
    Ok(cloud.select(&idx))
}

/// Cell-sorted index of a point set for fixed-radius neighbour queries.
struct RadiusIndex {
    cell: f64,
    keys: Vec<(i64, i64, i64, usize)>,
}

impl RadiusIndex {
    fn new(points: &[[f32; 3]], cell: f64) -> Self {
        let mut keys: Vec<(i64, i64, i64, usize)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let [x, y, z] = Self::cell_of(widen(*p), cell);
                (x, y, z, i)
            })
            .collect();
        keys.sort_unstable();
        Self { cell, keys }
    }

    fn cell_of(p: [f64; 3], cell: f64) -> [i64; 3] {
        p.map(|c| (c / cell).floor() as i64)
    }

    fn neighbors(&self, points: &[[f32; 3]], i: usize, eps2: f64, out: &mut Vec<usize>) {
        out.clear();
        let p = widen(points[i]);
        let [cx, cy, cz] = Self::cell_of(p, self.cell);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let key = (cx + dx, cy + dy, cz + dz);
                    let start = self.keys.partition_point(|k| (k.0, k.1, k.2) < key);
                    for k in &self.keys[start..] {
                        if (k.0, k.1, k.2) != key {
                            break;
                        }
                        if dist2(points[k.3], p) <= eps2 {
                            out.push(k.3);
                        }
                    }
                }
            }
        }
    }
}

/// DBSCAN cluster id per point (`None` for noise). Clusters are numbered in
/// order of their first core point.
pub fn dbscan_labels(points: &[[f32; 3]], eps: f64, min_pts: usize) -> Result<Vec<Option<usize>>, CloudError> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(CloudError::InvalidParameter("dbscan eps must be positive"));
    }
    let eps2 = eps * eps;
    let index = RadiusIndex::new(points, eps);
    let mut cluster: Vec<Option<usize>> = alloc::vec![None; points.len()];
    let mut visited = alloc::vec![false; points.len()];
    let mut neigh = Vec::new();
    let mut inner = Vec::new();
    let mut next_id = 0;
    for i in 0..points.len() {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        index.neighbors(points, i, eps2, &mut neigh);
        if neigh.len() < min_pts {
            continue;
        }
        let id = next_id;
        next_id += 1;
        cluster[i] = Some(id);
        let mut queue: Vec<usize> = neigh.clone();
        while let Some(j) = queue.pop() {
            if cluster[j].is_none() {
                cluster[j] = Some(id);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            index.neighbors(points, j, eps2, &mut inner);
            if inner.len() >= min_pts {
                queue.extend(inner.iter().copied().filter(|&k| !visited[k] || cluster[k].is_none()));
            }
        }
    }
    Ok(cluster)
}

/// Keeps only the largest DBSCAN cluster. Equal-sized clusters are resolved
/// in favour of the one containing the lowest point index.
pub fn dbscan_filter(cloud: &SegmentedPointCloud, eps: f64, min_pts: usize) -> Result<SegmentedPointCloud, CloudError> {
    let ids = dbscan_labels(&cloud.points, eps, min_pts)?;
    let n_clusters = ids.iter().flatten().max().map_or(0, |m| m + 1);
    if n_clusters == 0 {
        return Err(CloudError::EmptyResult);
    }
    let mut size = alloc::vec![0usize; n_clusters];
    let mut first = alloc::vec![usize::MAX; n_clusters];
    for (i, id) in ids.iter().enumerate() {
        if let Some(c) = *id {
            size[c] += 1;
            first[c] = first[c].min(i);
        }
    }
    let best = (0..n_clusters)
        .max_by(|&a, &b| size[a].cmp(&size[b]).then_with(|| first[b].cmp(&first[a])))
        .unwrap_or(0);
    let idx: Vec<usize> = (0..cloud.len()).filter(|&i| ids[i] == Some(best)).collect();
    Ok(cloud.select(&idx))
}

/// Source-demo observation preprocessing: crop to the workspace, keep the
/// largest DBSCAN cluster of each label, then farthest-point sample to `n`.
pub fn preprocess_observation(
    cloud: &SegmentedPointCloud,
    workspace: &Workspace,
    eps: f64,
    min_pts: usize,
    n: usize,
) -> Result<SegmentedPointCloud, CloudError> {
    let cropped = crop(cloud, workspace)?;
    let mut kept = SegmentedPointCloud::default();
    for label in Label::ALL {
        let part = cropped.filter_labels(|l| l == label);
        if part.is_empty() {
            continue;
        }
        match dbscan_filter(&part, eps, min_pts) {
            Ok(c) => kept.extend(&c),
            Err(CloudError::EmptyResult) => {}
            Err(e) => return Err(e),
        }
    }
    if kept.is_empty() {
        return Err(CloudError::EmptyResult);
    }
    fps(&kept, n)
}

/// Source frame supplying the goal points of each output frame.
///
/// Frames inside `target_skill` replay the source skill segment in lockstep
/// (`t - t_s' + t_s`); all other frames draw a source frame uniformly from
/// the non-skill part of the source demonstration.
pub fn goal_source_indices<R: Rng + ?Sized>(
    source_len: usize,
    source_skill: SkillRange,
    target_skill: SkillRange,
    horizon: usize,
    rng: &mut R,
) -> Result<Vec<usize>, CloudError> {
    let non_skill: Vec<usize> = (0..source_len).filter(|&i| !source_skill.contains(i)).collect();
    let mut out = Vec::with_capacity(horizon);
    for t in 0..horizon {
        if target_skill.contains(t) {
            let idx = t - target_skill.start + source_skill.start;
            if idx >= source_len {
                return Err(CloudError::IndexOutOfRange { index: idx, len: source_len });
            }
            out.push(idx);
        } else {
            if non_skill.is_empty() {
                return Err(CloudError::InvalidParameter("source demonstration has no non-skill frames"));
            }
            out.push(non_skill[rng.gen_range(0..non_skill.len())]);
        }
    }
    Ok(out)
}

/// One hybrid frame: goal points of the real frame plus robot/object points of
/// the simulated frame, farthest-point sampled to exactly `n` points.
///
/// When fewer than `n` points are available the FPS order is repeated
/// cyclically to fill the frame.
pub fn assemble_frame(
    real: &SegmentedPointCloud,
    sim: &SegmentedPointCloud,
    n: usize,
) -> Result<SegmentedPointCloud, CloudError> {
    let mut merged = real.filter_labels(|l| l == Label::Goal);
    merged.extend(&sim.filter_labels(|l| matches!(l, Label::Robot | Label::Object)));
    if merged.is_empty() {
        return Err(CloudError::EmptyResult);
    }
    let take = n.min(merged.len());
    let mut idx = fps_indices(&merged.points, take)?;
    let mut k = 0;
    while idx.len() < n {
        idx.push(idx[k]);
        k += 1;
    }
    Ok(merged.select(&idx))
}

/// Builds every observation frame of a generated demonstration.
///
/// `sim_frames` holds the simulated robot and object points of each generated
/// step and fixes the horizon.
pub fn assemble<R: Rng + ?Sized>(
    real_frames: &[SegmentedPointCloud],
    sim_frames: &[SegmentedPointCloud],
    source_skill: SkillRange,
    target_skill: SkillRange,
    n: usize,
    rng: &mut R,
) -> Result<Vec<SegmentedPointCloud>, CloudError> {
    let sources = goal_source_indices(real_frames.len(), source_skill, target_skill, sim_frames.len(), rng)?;
    sources
        .iter()
        .zip(sim_frames)
        .map(|(&src, sim)| assemble_frame(&real_frames[src], sim, n))
        .collect()
}

/// Smallest pairwise distance of a point set (`inf` for fewer than 2 points).
pub fn min_pairwise_distance(points: &[[f32; 3]]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            best = best.min(dist2(points[i], widen(points[j])));
        }
    }
    best.sqrt()
}
