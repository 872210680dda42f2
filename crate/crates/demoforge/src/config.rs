//! Run configuration (JSON). Relative paths are resolved against the
//! directory of the configuration file.

use std::path::{Path, PathBuf};

use demoforge_core::cloud::Workspace;
use demoforge_core::correspondence::CorrespondenceParams;
use demoforge_core::kinematics::IkParams;
use demoforge_core::transfer::{PoseSampler, DEFAULT_MIN_STEPS, DEFAULT_TRANSITION_STEP};
use demoforge_core::Vec3;
use serde::{Deserialize, Serialize};

use crate::files::read_json;
use crate::service::ServiceOptions;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    GoalAnchored,
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendConfig {
    Geometric,
    DescriptorFiles {
        dir: PathBuf,
    },
    Service {
        url: String,
        #[serde(default)]
        options: ServiceOptions,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    /// Dataset directory holding the source demonstration as demo 0.
    pub demo: PathBuf,
    pub annotation: PathBuf,
    /// Canonicalized source mesh the keypoints refer to.
    pub mesh: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    pub meshes: usize,
    pub demos_per_mesh: usize,
}

/// Object placement: uniform over a box centred on `center` (the source
/// object position when absent) and a yaw interval in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub center: Option<[f64; 2]>,
    pub extent: [f64; 2],
    pub yaw_deg: [f64; 2],
    /// Height of the support plane the object rests on.
    pub support_z: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { center: None, extent: [0.2, 0.2], yaw_deg: [0.0, 180.0], support_z: 0.0 }
    }
}

impl SamplerConfig {
    pub fn sampler(&self, default_center: (f64, f64)) -> Result<PoseSampler> {
        let (cx, cy) = self.center.map_or(default_center, |c| (c[0], c[1]));
        let yaw = (self.yaw_deg[0].to_radians(), self.yaw_deg[1].to_radians());
        let s = PoseSampler::centered(cx, cy, self.extent[0], self.extent[1], yaw, self.support_z);
        s.validate().map_err(|e| Error::Config(format!("sampler: {e}")))?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransitionConfig {
    pub step: f64,
    pub min_steps: usize,
}

impl Default for TransitionConfig {
    fn default() -> Self {
        Self { step: DEFAULT_TRANSITION_STEP, min_steps: DEFAULT_MIN_STEPS }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkspaceConfig {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl WorkspaceConfig {
    pub fn workspace(&self) -> Result<Workspace> {
        Workspace::new(Vec3::from_array(self.min), Vec3::from_array(self.max))
            .map_err(|e| Error::Config(format!("workspace: {e}")))
    }
}

impl Default for WorkspaceConfig {
    fn default() -> Self {
        let w = demoforge_core::synth::default_workspace();
        Self { min: w.min().to_array(), max: w.max().to_array() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderConfig {
    /// Square image size of the default scene cameras.
    pub resolution: usize,
    /// Scene camera file; replaces the default cameras.
    pub cameras: Option<PathBuf>,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { resolution: 128, cameras: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RigConfig {
    pub views: usize,
    pub elevation_deg: f64,
    pub radius_factor: f64,
    pub resolution: usize,
    pub focal: f64,
    pub neighbors: usize,
    pub min_weight: f64,
    pub visibility_tolerance_px: f64,
}

impl Default for RigConfig {
    fn default() -> Self {
        let p = CorrespondenceParams::default();
        Self {
            views: p.views,
            elevation_deg: p.elevation.to_degrees(),
            radius_factor: p.radius_factor,
            resolution: p.resolution,
            focal: p.focal,
            neighbors: p.neighbors,
            min_weight: p.min_weight,
            visibility_tolerance_px: p.visibility_tolerance_px,
        }
    }
}

impl RigConfig {
    pub fn params(&self) -> Result<CorrespondenceParams> {
        let p = CorrespondenceParams {
            views: self.views,
            elevation: self.elevation_deg.to_radians(),
            radius_factor: self.radius_factor,
            resolution: self.resolution,
            focal: self.focal,
            neighbors: self.neighbors,
            min_weight: self.min_weight,
            visibility_tolerance_px: self.visibility_tolerance_px,
        };
        p.validate().map_err(|e| Error::Config(format!("rig: {e}")))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IkConfig {
    pub tol_pos: f64,
    pub tol_rot: f64,
    pub max_iters: usize,
    pub damping: f64,
    pub max_step: f64,
}

impl Default for IkConfig {
    fn default() -> Self {
        let p = IkParams::default();
        Self { tol_pos: p.tol_pos, tol_rot: p.tol_rot, max_iters: p.max_iters, damping: p.damping, max_step: p.max_step }
    }
}

impl IkConfig {
    pub fn params(&self) -> IkParams {
        IkParams {
            tol_pos: self.tol_pos,
            tol_rot: self.tol_rot,
            max_iters: self.max_iters,
            damping: self.damping,
            max_step: self.max_step,
        }
    }
}

/// Options of the `synth` command, which writes a scripted source
/// demonstration and random target teapots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub targets: usize,
    pub resolution: usize,
    pub object_xy: [f64; 2],
    pub object_yaw_deg: f64,
    pub cup_xy: [f64; 2],
}

impl Default for SynthConfig {
    fn default() -> Self {
        let p = demoforge_core::synth::PourParams::default();
        Self {
            targets: 10,
            resolution: p.resolution,
            object_xy: [p.object_xy.0, p.object_xy.1],
            object_yaw_deg: p.object_yaw.to_degrees(),
            cup_xy: [p.cup_xy.0, p.cup_xy.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub jobs: Option<usize>,
    pub source: Option<SourceConfig>,
    pub canonicalize: CanonicalizeConfig,
    /// Canonical target meshes for `correspond` and `generate`. Mesh ids are
    /// file stems.
    pub meshes: Vec<PathBuf>,
    /// Added to `meshes`: every `.obj`/`.ply` in the directory, sorted.
    pub mesh_dir: Option<PathBuf>,
    /// Keypoint results (`<mesh_id>.json`) used by `generate`.
    pub keypoints_dir: Option<PathBuf>,
    pub split: Option<Split>,
    pub sampler: SamplerConfig,
    pub mode: Mode,
    pub transition: TransitionConfig,
    pub cloud_size: usize,
    pub dbscan_eps: f64,
    pub workspace: WorkspaceConfig,
    pub render: RenderConfig,
    pub rig: RigConfig,
    pub backend: BackendConfig,
    pub chain: Option<PathBuf>,
    pub ik: IkConfig,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out: None,
            seed: 0,
            jobs: None,
            source: None,
            canonicalize: CanonicalizeConfig::default(),
            meshes: Vec::new(),
            mesh_dir: None,
            keypoints_dir: None,
            split: None,
            sampler: SamplerConfig::default(),
            mode: Mode::GoalAnchored,
            transition: TransitionConfig::default(),
            cloud_size: demoforge_core::cloud::DEFAULT_CLOUD_SIZE,
            dbscan_eps: 0.01,
            workspace: WorkspaceConfig::default(),
            render: RenderConfig::default(),
            rig: RigConfig::default(),
            backend: BackendConfig::Geometric,
            chain: None,
            ik: IkConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

pub const MIN_CLOUD_SIZE: usize = 64;

impl RunConfig {
    /// Parses a configuration file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let mut cfg: RunConfig = read_json(path).map_err(|e| Error::Config(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        cfg.resolve(&base);
        Ok(cfg)
    }

    /// Makes every relative path absolute with respect to `base`.
    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.out,
            &mut self.mesh_dir,
            &mut self.keypoints_dir,
            &mut self.chain,
            &mut self.canonicalize.mesh_dir,
            &mut self.canonicalize.pose_overrides,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        self.meshes.iter_mut().for_each(fix);
        self.canonicalize.meshes.iter_mut().for_each(fix);
        if let Some(s) = &mut self.source {
            fix(&mut s.demo);
            fix(&mut s.annotation);
            fix(&mut s.mesh);
        }
        if let Some(p) = &mut self.render.cameras {
            fix(p);
        }
        if let BackendConfig::DescriptorFiles { dir } = &mut self.backend {
            fix(dir);
        }
    }

    /// Checks values that do not depend on files.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.cloud_size < MIN_CLOUD_SIZE {
            return bad(format!("cloud_size {} is below {MIN_CLOUD_SIZE}", self.cloud_size));
        }
        if self.jobs == Some(0) {
            return bad("jobs must be at least 1".into());
        }
        if !(self.dbscan_eps > 0.0) {
            return bad("dbscan_eps must be positive".into());
        }
        if !(self.transition.step > 0.0) || self.transition.min_steps < 2 {
            return bad("transition step must be positive and min_steps at least 2".into());
        }
        if self.render.resolution < 8 {
            return bad("render resolution must be at least 8".into());
        }
        if let Some(s) = self.split {
            if s.meshes == 0 || s.demos_per_mesh == 0 {
                return bad("split must be at least 1 x 1".into());
            }
        }
        self.workspace.workspace()?;
        self.rig.params()?;
        Ok(())
    }

    /// Canonical target meshes.
    pub fn mesh_paths(&self) -> Result<Vec<PathBuf>> {
        collect_meshes(&self.meshes, self.mesh_dir.as_deref())
    }
}

/// Inputs of the `canonicalize` command.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CanonicalizeConfig {
    pub meshes: Vec<PathBuf>,
    pub mesh_dir: Option<PathBuf>,
    /// Manual canonical poses, `{mesh_id: [w, x, y, z, tx, ty, tz]}`.
    pub pose_overrides: Option<PathBuf>,
}

impl CanonicalizeConfig {
    pub fn mesh_paths(&self) -> Result<Vec<PathBuf>> {
        collect_meshes(&self.meshes, self.mesh_dir.as_deref())
    }
}

/// `list` followed by the sorted `.obj`/`.ply` files of `dir`.
pub fn collect_meshes(list: &[PathBuf], dir: Option<&Path>) -> Result<Vec<PathBuf>> {
    let mut out = list.to_vec();
    if let Some(dir) = dir {
        let mut found = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(|e| Error::Config(format!("{}: {e}", dir.display())))? {
            let p = entry.map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?.path();
            let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
            if matches!(ext.as_deref(), Some("obj" | "ply")) {
                found.push(p);
            }
        }
        found.sort();
        out.extend(found);
    }
    for p in &out {
        if !p.is_file() {
            return Err(Error::Config(format!("mesh {} does not exist", p.display())));
        }
    }
    Ok(out)
}

/// Mesh id of a mesh file: its stem.
pub fn mesh_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}
