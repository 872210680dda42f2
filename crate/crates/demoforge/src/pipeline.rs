//! The batch commands: synth, canonicalize, correspond, generate, inspect.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use demoforge_core::cloud::{assemble, crop, CloudError, Label};
use demoforge_core::correspondence::{
    transfer_keypoint_views, BackendError, DescriptorBackend, DescriptorMap, GeometricBackend, RenderedView, ViewSet,
};
use demoforge_core::demo::{extract_grasp_time, DemoStep, Demonstration};
use demoforge_core::geometry::Quat;
use demoforge_core::kinematics::solve_trajectory;
use demoforge_core::mesh::MeshError;
use demoforge_core::primitives::{self, TeapotParams};
use demoforge_core::render::{Camera, Rasterizer};
use demoforge_core::scene::{observe, scene_cameras, ScenePart, WORKSPACE_CENTER};
use demoforge_core::synth::{resting_pose, teapot_pour, PourParams};
use demoforge_core::transfer::{generate_trajectory, yaw_of, GenerateParams, PoseSampler};
use demoforge_core::{Pose, SegmentedPointCloud, TriMesh, Vec3, Workspace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{mesh_id, BackendConfig, Mode, RunConfig, SourceConfig, Split};
use crate::dataset::{self, DemoMeta, Manifest, ManifestEntry, SCHEMA_VERSION};
use crate::dmap::{self, DescriptorFilesBackend};
use crate::files::{self, load_annotations, read_json, write_json, Annotation, AnnotationFile, ChainSpec, KeypointResult};
use crate::meshio;
use crate::service::ServiceBackend;
use crate::{Error, Result};

/// Runs `f` on a pool of `jobs` worker threads.
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn config_error(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetTruth {
    pub mesh_id: String,
    /// Keypoints in the frame of the written (uncanonicalized) mesh.
    pub affording_point: [f64; 3],
    pub function_point: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSummary {
    pub source_steps: usize,
    pub targets: usize,
}

/// Writes a scripted source demonstration under `out/source`, randomly
/// shaped and posed teapots under `out/meshes`, their true keypoints in
/// `out/targets.json`, and a `run.json` wiring the later commands together.
pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<SynthSummary> {
    cfg.validate()?;
    let s = &cfg.synth;
    let params = PourParams {
        object_xy: (s.object_xy[0], s.object_xy[1]),
        object_yaw: s.object_yaw_deg.to_radians(),
        cup_xy: (s.cup_xy[0], s.cup_xy[1]),
        resolution: s.resolution,
        cloud_size: cfg.cloud_size,
        dbscan_eps: cfg.dbscan_eps,
        ..PourParams::default()
    };
    let pour = teapot_pour(&params)?;
    let source_dir = out.join("source");
    create_dir(&source_dir)?;
    dataset::write_dataset(
        &source_dir,
        cfg.cloud_size,
        Some(cfg.seed),
        &[(DemoMeta { dir: "demo_0", mesh_id: "source", seed: cfg.seed }, &pour.demo)],
    )?;
    meshio::save_obj(&source_dir.join("mesh.obj"), &pour.mesh)?;
    let annotation = Annotation {
        skill_range: pour.demo.skill_range(),
        keypoints: pour.demo.keypoints(),
        t_init: pour.demo.source_object_pose(),
        t_grasp: Some(pour.demo.t_grasp()),
    };
    write_json(&source_dir.join("annotation.json"), &AnnotationFile::from(&annotation))?;

    let mesh_dir = out.join("meshes");
    create_dir(&mesh_dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut truth = Vec::with_capacity(s.targets);
    for k in 0..s.targets {
        let teapot = primitives::toy_teapot(&TeapotParams::sample(&mut rng));
        let axis = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let rotation = Quat::from_axis_angle(axis.try_normalize().unwrap_or(Vec3::Z), rng.gen_range(0.0..std::f64::consts::PI));
        let placed = Pose::new(rotation, Vec3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(0.0..0.5)));
        let id = format!("teapot_{k:03}");
        meshio::save_obj(&mesh_dir.join(format!("{id}.obj")), &teapot.mesh.transformed(&placed))?;
        truth.push(TargetTruth {
            mesh_id: id,
            affording_point: placed.apply_point(teapot.affording_point).to_array(),
            function_point: placed.apply_point(teapot.function_point).to_array(),
        });
    }
    write_json(&out.join("targets.json"), &truth)?;

    let run = RunConfig {
        seed: cfg.seed,
        source: Some(SourceConfig {
            demo: "source".into(),
            annotation: "source/annotation.json".into(),
            mesh: "source/mesh.obj".into(),
        }),
        canonicalize: crate::config::CanonicalizeConfig { mesh_dir: Some("meshes".into()), ..Default::default() },
        mesh_dir: Some("canonical".into()),
        keypoints_dir: Some("keypoints".into()),
        split: Some(Split { meshes: s.targets.max(1), demos_per_mesh: 10 }),
        cloud_size: cfg.cloud_size,
        dbscan_eps: cfg.dbscan_eps,
        ..RunConfig::default()
    };
    write_json(&out.join("run.json"), &run)?;
    log::info!("synth: source demo of {} steps, {} target meshes", pour.demo.len(), s.targets);
    Ok(SynthSummary { source_steps: pour.demo.len(), targets: s.targets })
}

// ---------------------------------------------------------------- canonicalize

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalEntry {
    pub mesh_id: String,
    /// File names of the input and the canonical mesh.
    pub input: String,
    pub output: String,
    /// `pca` or `override`.
    pub method: String,
    /// Transform from the input frame to the canonical frame.
    pub pose: files::PoseArray,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvalues: Option<[f64; 3]>,
    #[serde(default)]
    pub quarter_turn_ambiguous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub mesh_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CanonicalizeReport {
    pub meshes: Vec<CanonicalEntry>,
    /// Meshes whose principal axes are not unique and had no override.
    pub degenerate: Vec<Failure>,
    pub failed: Vec<Failure>,
    pub overrides_applied: Vec<String>,
    pub warnings: Vec<String>,
}

enum Canonical {
    Done(CanonicalEntry, Option<String>),
    Degenerate(Failure),
    Failed(Failure),
}

fn canonicalize_one(path: &Path, out: &Path, overrides: &BTreeMap<String, Pose>) -> Canonical {
    let id = mesh_id(path);
    let fail = |e: &dyn std::fmt::Display| Failure { mesh_id: id.clone(), error: e.to_string() };
    let mesh = match meshio::load_mesh(path) {
        Ok(m) => m,
        Err(e) => return Canonical::Failed(fail(&e)),
    };
    let output = out.join(format!("{id}.obj"));
    let (canonical, entry_tail, warning) = if let Some(pose) = overrides.get(&id) {
        (mesh.transformed(pose), ("override", *pose, None, false), None)
    } else {
        match mesh.canonicalize_pca() {
            Ok((c, report)) => {
                let warning = report
                    .quarter_turn_ambiguous
                    .then(|| format!("{id}: long and middle axes within 5%, a manual pose may be needed"));
                let pose = c.canonical_pose();
                (c, ("pca", pose, Some(report.eigenvalues), report.quarter_turn_ambiguous), warning)
            }
            Err(e @ MeshError::DegenerateCovariance { .. }) => return Canonical::Degenerate(fail(&e)),
            Err(e) => return Canonical::Failed(fail(&e)),
        }
    };
    if let Err(e) = meshio::save_obj(&output, &canonical) {
        return Canonical::Failed(fail(&e));
    }
    let (method, pose, eigenvalues, quarter_turn_ambiguous) = entry_tail;
    Canonical::Done(
        CanonicalEntry {
            output: format!("{id}.obj"),
            mesh_id: id,
            input: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            method: method.into(),
            pose: pose.to_array(),
            eigenvalues,
            quarter_turn_ambiguous,
        },
        warning,
    )
}

/// Canonicalizes every configured mesh into `out/<mesh_id>.obj` and writes
/// `out/report.json`. Degenerate meshes are reported and skipped.
pub fn cmd_canonicalize(cfg: &RunConfig, out: &Path) -> Result<CanonicalizeReport> {
    let paths = cfg.canonicalize.mesh_paths()?;
    if paths.is_empty() {
        return Err(Error::Config("canonicalize: no meshes configured".into()));
    }
    let overrides = match &cfg.canonicalize.pose_overrides {
        Some(p) => files::load_pose_overrides(p).map_err(config_error)?,
        None => BTreeMap::new(),
    };
    create_dir(out)?;
    let results: Vec<Canonical> = paths.par_iter().map(|p| canonicalize_one(p, out, &overrides)).collect();
    let mut report = CanonicalizeReport::default();
    for r in results {
        match r {
            Canonical::Done(e, w) => {
                if e.method == "override" {
                    report.overrides_applied.push(e.mesh_id.clone());
                }
                report.warnings.extend(w);
                report.meshes.push(e);
            }
            Canonical::Degenerate(f) => {
                log::warn!("{}: {}", f.mesh_id, f.error);
                report.degenerate.push(f);
            }
            Canonical::Failed(f) => {
                log::warn!("{}: {}", f.mesh_id, f.error);
                report.failed.push(f);
            }
        }
    }
    for id in overrides.keys() {
        if !report.overrides_applied.contains(id) {
            report.warnings.push(format!("override for unknown mesh {id}"));
        }
    }
    write_json(&out.join("report.json"), &report)?;
    log::info!("canonicalize: {} written, {} degenerate, {} failed", report.meshes.len(), report.degenerate.len(), report.failed.len());
    Ok(report)
}

// ---------------------------------------------------------------- correspond

pub type SharedBackend = Box<dyn DescriptorBackend + Send + Sync>;

pub fn build_backend(cfg: &BackendConfig) -> Result<SharedBackend> {
    Ok(match cfg {
        BackendConfig::Geometric => Box::new(GeometricBackend),
        BackendConfig::DescriptorFiles { dir } => Box::new(DescriptorFilesBackend::new(dir.clone())?),
        BackendConfig::Service { url, options } => Box::new(ServiceBackend::connect(url, options.clone())?),
    })
}

/// Serializes calls into a backend that declared single-flight.
struct Serialized<'a> {
    inner: &'a (dyn DescriptorBackend + Send + Sync),
    lock: Mutex<()>,
}

impl DescriptorBackend for Serialized<'_> {
    fn describe(&self, view: &RenderedView<'_>) -> std::result::Result<DescriptorMap, BackendError> {
        let _guard = self.lock.lock().unwrap_or_else(|p| p.into_inner());
        self.inner.describe(view)
    }

    fn name(&self) -> String {
        self.inner.name()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondSummary {
    pub backend: String,
    pub succeeded: Vec<String>,
    pub failed: Vec<Failure>,
}

struct Source {
    mesh: TriMesh,
    annotation: Annotation,
}

fn load_source_mesh(src: &SourceConfig) -> Result<Source> {
    let mesh = meshio::load_mesh(&src.mesh).map_err(config_error)?;
    let annotation = load_annotations(&src.annotation, &mesh).map_err(config_error)?;
    Ok(Source { mesh, annotation })
}

fn require_source(cfg: &RunConfig) -> Result<&SourceConfig> {
    cfg.source.as_ref().ok_or_else(|| Error::Config("no source configured".into()))
}

fn correspond_one(
    path: &Path,
    src: &Source,
    src_views: &ViewSet,
    backend: &dyn DescriptorBackend,
    params: &demoforge_core::correspondence::CorrespondenceParams,
) -> Result<KeypointResult> {
    let id = mesh_id(path);
    let mesh = meshio::load_mesh(path)?;
    let views = ViewSet::build(&mesh, &id, backend, params)?;
    let kp = src.annotation.keypoints;
    let aff = transfer_keypoint_views(&src.mesh, src_views, kp.affording_point, &views, params)?;
    let fun = transfer_keypoint_views(&src.mesh, src_views, kp.function_point, &views, params)?;
    Ok(KeypointResult {
        mesh_id: id,
        backend: backend.name(),
        affording_point: (&aff).into(),
        function_point: (&fun).into(),
    })
}

/// Transfers the source keypoints onto every target mesh, writing
/// `out/<mesh_id>.json` per success and `out/summary.json`.
pub fn cmd_correspond(cfg: &RunConfig, out: &Path) -> Result<CorrespondSummary> {
    cfg.validate()?;
    let src = load_source_mesh(require_source(cfg)?)?;
    let targets = cfg.mesh_paths()?;
    let params = cfg.rig.params()?;
    let backend = build_backend(&cfg.backend).map_err(config_error)?;
    let serialized;
    let backend: &(dyn DescriptorBackend + Sync) = if backend.single_flight() {
        serialized = Serialized { inner: backend.as_ref(), lock: Mutex::new(()) };
        &serialized
    } else {
        backend.as_ref()
    };
    create_dir(out)?;
    let src_views = ViewSet::build(&src.mesh, "source", backend, &params)?;
    let results: Vec<(String, Result<KeypointResult>)> = targets
        .par_iter()
        .map(|p| (mesh_id(p), correspond_one(p, &src, &src_views, backend, &params)))
        .collect();
    let mut summary = CorrespondSummary { backend: backend.name(), succeeded: Vec::new(), failed: Vec::new() };
    for (id, r) in results {
        match r {
            Ok(res) => {
                write_json(&out.join(format!("{id}.json")), &res)?;
                summary.succeeded.push(id);
            }
            Err(e) => {
                log::warn!("{id}: {e}");
                summary.failed.push(Failure { mesh_id: id, error: e.to_string() });
            }
        }
    }
    write_json(&out.join("summary.json"), &summary)?;
    log::info!("correspond: {} matched, {} failed", summary.succeeded.len(), summary.failed.len());
    Ok(summary)
}

/// Captures the views a backend is asked to describe.
struct ViewExporter<'a> {
    dir: &'a Path,
    failures: Mutex<Vec<String>>,
}

impl DescriptorBackend for ViewExporter<'_> {
    fn describe(&self, view: &RenderedView<'_>) -> std::result::Result<DescriptorMap, BackendError> {
        if let Err(e) = dmap::export_views(self.dir, view) {
            self.failures.lock().unwrap_or_else(|p| p.into_inner()).push(e.to_string());
        }
        Ok(DescriptorMap::zeros(view.depth.width(), view.depth.height(), 1))
    }
}

/// Writes the rig renders of the source and every target under `dir` for an
/// offline descriptor model (see [`DescriptorFilesBackend`]).
pub fn cmd_export_views(cfg: &RunConfig, dir: &Path) -> Result<usize> {
    cfg.validate()?;
    let src = load_source_mesh(require_source(cfg)?)?;
    let targets = cfg.mesh_paths()?;
    let params = cfg.rig.params()?;
    let exporter = ViewExporter { dir, failures: Mutex::new(Vec::new()) };
    ViewSet::build(&src.mesh, "source", &exporter, &params)?;
    for p in &targets {
        ViewSet::build(&meshio::load_mesh(p)?, &mesh_id(p), &exporter, &params)?;
    }
    if let Some(e) = exporter.failures.into_inner().unwrap_or_else(|p| p.into_inner()).into_iter().next() {
        return Err(Error::Dataset(e));
    }
    Ok(targets.len() + 1)
}

// ---------------------------------------------------------------- generate

/// Per-task seed: the first 8 bytes of SHA-256 over the master seed, the mesh
/// id and the pose index.
pub fn task_seed(master: u64, mesh_id: &str, pose_index: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((mesh_id.len() as u64).to_le_bytes());
    h.update(mesh_id.as_bytes());
    h.update((pose_index as u64).to_le_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

/// Source demonstration with the annotation applied.
pub fn load_source_demo(src: &SourceConfig) -> Result<(Demonstration, TriMesh)> {
    let s = load_source_mesh(src)?;
    let manifest = dataset::read_manifest(&src.demo).map_err(config_error)?;
    let raw = dataset::read_demo(&src.demo, &manifest, 0).map_err(config_error)?;
    let a = s.annotation;
    let t_grasp = match a.t_grasp {
        Some(t) => t,
        None => extract_grasp_time(&raw.gripper()).map_err(|e| Error::Config(e.to_string()))?,
    };
    let steps = raw.steps().to_vec();
    let demo = Demonstration::new(steps, t_grasp, a.skill_range, a.t_init, a.keypoints)
        .map_err(|e| Error::Config(format!("{}: {e}", src.annotation.display())))?;
    Ok((demo, s.mesh))
}

struct Target {
    id: String,
    mesh: TriMesh,
    keypoints: demoforge_core::demo::KeypointAnnotation,
}

/// Everything a generation task reads; immutable once built.
pub struct GenerateContext {
    source: Demonstration,
    targets: Vec<Target>,
    /// Meshes skipped for lack of keypoints.
    missing: Vec<Failure>,
    demos_per_mesh: usize,
    sampler: PoseSampler,
    support_z: f64,
    params: GenerateParams,
    cameras: Vec<Camera>,
    workspace: Workspace,
    chain: Option<ChainSpec>,
    ik: demoforge_core::kinematics::IkParams,
    cloud_size: usize,
    seed: u64,
}

impl GenerateContext {
    pub fn build(cfg: &RunConfig) -> Result<GenerateContext> {
        cfg.validate()?;
        let (source, _) = load_source_demo(require_source(cfg)?)?;
        let paths = cfg.mesh_paths()?;
        let split = cfg.split.unwrap_or(Split { meshes: paths.len(), demos_per_mesh: 1 });
        if paths.len() < split.meshes {
            return Err(Error::Config(format!("split asks for {} meshes, {} configured", split.meshes, paths.len())));
        }
        let kp_dir = cfg.keypoints_dir.as_ref().ok_or_else(|| Error::Config("keypoints_dir is required".into()))?;
        let mut targets = Vec::new();
        let mut missing = Vec::new();
        for p in &paths[..split.meshes] {
            let id = mesh_id(p);
            let mesh = meshio::load_mesh(p).map_err(config_error)?;
            let kp_path = kp_dir.join(format!("{id}.json"));
            if !kp_path.exists() {
                log::warn!("{id}: no keypoint result at {}, skipping", kp_path.display());
                missing.push(Failure { mesh_id: id, error: format!("no keypoint result at {}", kp_path.display()) });
                continue;
            }
            let res: KeypointResult = read_json(&kp_path).map_err(config_error)?;
            targets.push(Target { id, mesh, keypoints: res.keypoints() });
        }
        let t = source.source_object_pose().translation;
        let sampler = cfg.sampler.sampler((t.x, t.y))?;
        let cameras = match &cfg.render.cameras {
            Some(p) => files::load_cameras(p).map_err(config_error)?,
            None => scene_cameras(cfg.render.resolution, WORKSPACE_CENTER),
        };
        let chain = cfg.chain.as_ref().map(|p| files::load_chain(p).map_err(config_error)).transpose()?;
        Ok(GenerateContext {
            source,
            targets,
            missing,
            demos_per_mesh: split.demos_per_mesh,
            sampler,
            support_z: cfg.sampler.support_z,
            params: GenerateParams {
                transition_step: cfg.transition.step,
                min_steps: cfg.transition.min_steps,
                literal: cfg.mode == Mode::Literal,
            },
            cameras,
            workspace: cfg.workspace.workspace()?,
            chain,
            ik: cfg.ik.params(),
            cloud_size: cfg.cloud_size,
            seed: cfg.seed,
        })
    }

    pub fn source(&self) -> &Demonstration {
        &self.source
    }

    /// Generates the demonstration of `target` at pose sample `pose_index`.
    pub fn generate(&self, target: usize, pose_index: usize, raster: &mut Rasterizer) -> Result<(Demonstration, u64)> {
        let tgt = &self.targets[target];
        let seed = task_seed(self.seed, &tgt.id, pose_index);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = self.sampler.sample(&mut rng);
        let t_new = resting_pose(&tgt.mesh, s.translation.x, s.translation.y, yaw_of(s.rotation), self.support_z);
        let traj = generate_trajectory(&self.source, &tgt.keypoints, &t_new, &self.params, None)?;
        let joints = match &self.chain {
            Some(c) => Some(
                solve_trajectory(&c.chain, &traj.poses, &c.home, &self.ik)
                    .map_err(|(i, e)| Error::Dataset(format!("IK failed at waypoint {i}: {e}")))?,
            ),
            None => None,
        };
        let objects = traj.object_poses();
        let mut sim = Vec::with_capacity(traj.len());
        for t in 0..traj.len() {
            let hand = primitives::gripper(traj.gripper[t]);
            let mut parts = vec![
                ScenePart { mesh: &hand, pose: traj.poses[t], label: Label::Robot },
                ScenePart { mesh: &tgt.mesh, pose: objects[t], label: Label::Object },
            ];
            let links;
            if let (Some(c), Some(q)) = (&self.chain, &joints) {
                links = c.chain.link_poses(&q[t])?;
                for (m, pose) in c.link_meshes.iter().zip(&links) {
                    if let Some(m) = m {
                        parts.push(ScenePart { mesh: m, pose: *pose, label: Label::Robot });
                    }
                }
            }
            let raw = observe(&parts, &self.cameras, raster);
            sim.push(match crop(&raw, &self.workspace) {
                Ok(c) => c,
                Err(CloudError::EmptyResult) => SegmentedPointCloud::default(),
                Err(e) => return Err(e.into()),
            });
        }
        let real = self.source.clouds();
        let clouds = assemble(&real, &sim, self.source.skill_range(), traj.skill_range, self.cloud_size, &mut rng)?;
        let steps = clouds
            .into_iter()
            .enumerate()
            .map(|(t, cloud)| DemoStep {
                time_index: t,
                ee_pose: traj.poses[t],
                gripper: traj.gripper[t],
                proprioception: joints.as_ref().map_or_else(Vec::new, |q| q[t].clone()),
                cloud,
            })
            .collect();
        let demo = Demonstration::new(steps, traj.t_grasp, traj.skill_range, t_new, tgt.keypoints)?;
        Ok((demo, seed))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MeshCounts {
    pub completed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub requested: usize,
    pub completed: usize,
    pub per_mesh: BTreeMap<String, MeshCounts>,
    pub failed: Vec<Failure>,
}

/// Generates `split.meshes × split.demos_per_mesh` demonstrations into
/// `out` and writes the manifest (completed demos only) and `summary.json`.
pub fn cmd_generate(cfg: &RunConfig, out: &Path) -> Result<GenerateSummary> {
    let ctx = GenerateContext::build(cfg)?;
    run_generate(&ctx, out)
}

pub fn run_generate(ctx: &GenerateContext, out: &Path) -> Result<GenerateSummary> {
    create_dir(out)?;
    let start = Instant::now();
    let tasks: Vec<(usize, usize)> =
        (0..ctx.targets.len()).flat_map(|m| (0..ctx.demos_per_mesh).map(move |k| (m, k))).collect();
    let results: Vec<Result<ManifestEntry>> = tasks
        .par_iter()
        .map_init(Rasterizer::new, |raster, &(m, k)| {
            let (demo, seed) = ctx.generate(m, k, raster)?;
            let dir = format!("demo_{}", m * ctx.demos_per_mesh + k);
            dataset::write_demo(out, DemoMeta { dir: &dir, mesh_id: &ctx.targets[m].id, seed }, &demo)
        })
        .collect();
    let mut summary = GenerateSummary {
        requested: (ctx.targets.len() + ctx.missing.len()) * ctx.demos_per_mesh,
        ..Default::default()
    };
    let mut entries = Vec::new();
    for (&(m, k), r) in tasks.iter().zip(results) {
        let id = &ctx.targets[m].id;
        let counts = summary.per_mesh.entry(id.clone()).or_default();
        match r {
            Ok(e) => {
                counts.completed += 1;
                entries.push(e);
            }
            Err(e) => {
                counts.failed += 1;
                log::warn!("{id} pose {k}: {e}");
                summary.failed.push(Failure { mesh_id: id.clone(), error: format!("pose {k}: {e}") });
            }
        }
    }
    for f in &ctx.missing {
        summary.per_mesh.insert(f.mesh_id.clone(), MeshCounts { completed: 0, failed: ctx.demos_per_mesh });
        summary.failed.push(f.clone());
    }
    summary.completed = entries.len();
    let manifest =
        Manifest { schema_version: SCHEMA_VERSION, cloud_size: ctx.cloud_size, master_seed: Some(ctx.seed), demos: entries };
    dataset::write_manifest(out, &manifest)?;
    write_json(&out.join("summary.json"), &summary)?;
    log::info!(
        "generate: {} of {} demos in {:.1} s",
        summary.completed,
        summary.requested,
        start.elapsed().as_secs_f64()
    );
    if summary.completed == 0 && summary.requested > 0 {
        return Err(Error::AllFailed(summary.requested));
    }
    Ok(summary)
}

// ---------------------------------------------------------------- inspect

/// Writes `out/demo_<index>_frame_<frame>.ply` and returns a text summary.
pub fn cmd_inspect(dataset_dir: &Path, index: usize, frame: usize, out: &Path) -> Result<(PathBuf, String)> {
    let manifest = dataset::read_manifest(dataset_dir)?;
    let demo = dataset::read_demo(dataset_dir, &manifest, index)?;
    let step = demo.steps().get(frame).ok_or(Error::IndexOutOfRange { index: frame, len: demo.len() })?;
    create_dir(out)?;
    let ply = out.join(format!("demo_{index}_frame_{frame}.ply"));
    meshio::save_cloud_ply(&ply, &step.cloud)?;
    let e = &manifest.demos[index];
    let hist = step.cloud.label_histogram();
    let mut s = String::new();
    let mut line = |text: String| writeln!(s, "{text}").expect("writing to a String");
    line(format!("demo {index} ({}), mesh {}, seed {}", e.dir, e.mesh_id, e.seed));
    line(format!("steps {}, grasp at {}, skill [{}, {}]", demo.len(), demo.t_grasp(), e.skill_range[0], e.skill_range[1]));
    line(format!("object pose {:?}", e.pose));
    line(format!("affording point {:?}, function point {:?}", e.keypoints.affording_point, e.keypoints.function_point));
    line(format!("frame {frame}: stage {:?}, gripper {}", demo.stage_of(frame), step.gripper));
    line(format!("ee pose {:?}", step.ee_pose.to_array()));
    line(format!(
        "points {}: robot {}, object {}, goal {}, other {}",
        step.cloud.len(),
        hist[0],
        hist[1],
        hist[2],
        hist[3]
    ));
    line(format!("wrote {}", ply.display()));
    Ok((ply, s))
}
