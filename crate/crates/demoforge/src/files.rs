//! JSON side files: annotations, keypoint results, cameras, chains and pose
//! overrides, plus a PGM depth dump.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use demoforge_core::correspondence::{MatchResult, ViewStats};
use demoforge_core::demo::{KeypointAnnotation, SkillRange};
use demoforge_core::kinematics::{Joint, SerialChain};
use demoforge_core::render::{Camera, DepthImage, Intrinsics};
use demoforge_core::{Pose, TriMesh, Vec3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Pose as `[w, x, y, z, tx, ty, tz]`.
pub type PoseArray = [f64; 7];

pub fn pose_from_array(a: PoseArray) -> Result<Pose> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!("pose {a:?} is not finite")));
    }
    if a[..4].iter().map(|v| v * v).sum::<f64>() < 1e-12 {
        return Err(Error::Config(format!("pose {a:?} has a zero quaternion")));
    }
    Ok(Pose::from_array(a))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    serde_json::from_str(&text).map_err(Error::json(path))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::json(path))?;
    text.push('\n');
    fs::write(path, text).map_err(Error::io(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeypointsJson {
    pub affording_point: [f64; 3],
    pub function_point: [f64; 3],
}

impl From<KeypointAnnotation> for KeypointsJson {
    fn from(k: KeypointAnnotation) -> Self {
        KeypointsJson { affording_point: k.affording_point.to_array(), function_point: k.function_point.to_array() }
    }
}

impl From<KeypointsJson> for KeypointAnnotation {
    fn from(k: KeypointsJson) -> Self {
        KeypointAnnotation {
            affording_point: Vec3::from_array(k.affording_point),
            function_point: Vec3::from_array(k.function_point),
        }
    }
}

/// Human annotation of a source demonstration. Keypoints are in the frame of
/// the (canonicalized) source mesh; `t_init` places that frame in the world
/// at the first step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationFile {
    pub skill_range: [usize; 2],
    pub keypoints: KeypointsJson,
    pub t_init: PoseArray,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grasp: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub skill_range: SkillRange,
    pub keypoints: KeypointAnnotation,
    pub t_init: Pose,
    pub t_grasp: Option<usize>,
}

/// Reads and validates an annotation; keypoints must lie on `mesh`.
pub fn load_annotations(path: &Path, mesh: &TriMesh) -> Result<Annotation> {
    let raw: AnnotationFile = read_json(path)?;
    let [s, e] = raw.skill_range;
    let skill_range = SkillRange::new(s, e).map_err(|err| Error::parse(path, 0, format!("skill_range: {err}")))?;
    let t_init = pose_from_array(raw.t_init).map_err(|err| Error::parse(path, 0, format!("t_init: {err}")))?;
    let keypoints = KeypointAnnotation::from(raw.keypoints);
    keypoints.validate_against(mesh)?;
    Ok(Annotation { skill_range, keypoints, t_init, t_grasp: raw.t_grasp })
}

impl From<&Annotation> for AnnotationFile {
    fn from(a: &Annotation) -> Self {
        AnnotationFile {
            skill_range: [a.skill_range.start, a.skill_range.end],
            keypoints: a.keypoints.into(),
            t_init: a.t_init.to_array(),
            t_grasp: a.t_grasp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewStatsJson {
    pub visible_neighbors: usize,
    pub accepted: usize,
    pub mean_weight: f64,
}

impl From<&ViewStats> for ViewStatsJson {
    fn from(s: &ViewStats) -> Self {
        ViewStatsJson { visible_neighbors: s.visible_neighbors, accepted: s.accepted, mean_weight: s.mean_weight }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointMatchJson {
    pub x: [f64; 3],
    pub confidence: f64,
    pub per_view: Vec<ViewStatsJson>,
}

impl From<&MatchResult> for PointMatchJson {
    fn from(m: &MatchResult) -> Self {
        PointMatchJson {
            x: m.keypoint.to_array(),
            confidence: m.confidence,
            per_view: m.per_view.iter().map(ViewStatsJson::from).collect(),
        }
    }
}

/// Transferred keypoints of one target mesh, in its canonical frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointResult {
    pub mesh_id: String,
    /// Descriptor backend and model that produced the match.
    pub backend: String,
    pub affording_point: PointMatchJson,
    pub function_point: PointMatchJson,
}

impl KeypointResult {
    pub fn keypoints(&self) -> KeypointAnnotation {
        KeypointAnnotation {
            affording_point: Vec3::from_array(self.affording_point.x),
            function_point: Vec3::from_array(self.function_point.x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicsJson {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

/// One camera of the capture rig; `pose` is camera-to-world with +z forward
/// and +y down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraJson {
    pub intrinsics: IntrinsicsJson,
    pub pose: PoseArray,
}

impl From<&Camera> for CameraJson {
    fn from(c: &Camera) -> Self {
        let k = c.intrinsics;
        CameraJson {
            intrinsics: IntrinsicsJson { fx: k.fx, fy: k.fy, cx: k.cx, cy: k.cy, width: k.width, height: k.height },
            pose: c.pose.to_array(),
        }
    }
}

impl CameraJson {
    pub fn to_camera(&self) -> Result<Camera> {
        let k = self.intrinsics;
        let intrinsics = Intrinsics { fx: k.fx, fy: k.fy, cx: k.cx, cy: k.cy, width: k.width, height: k.height };
        Camera::new(intrinsics, pose_from_array(self.pose)?).map_err(|e| Error::Config(format!("camera: {e}")))
    }
}

/// Scene camera file: a JSON array of cameras.
pub fn load_cameras(path: &Path) -> Result<Vec<Camera>> {
    let raw: Vec<CameraJson> = read_json(path)?;
    if raw.is_empty() {
        return Err(Error::Config(format!("{}: no cameras", path.display())));
    }
    raw.iter().map(CameraJson::to_camera).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointJson {
    pub axis: [f64; 3],
    pub origin: PoseArray,
    pub limits: [f64; 2],
    /// Link geometry attached after this joint, relative to the chain file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainJson {
    pub joints: Vec<JointJson>,
    #[serde(default = "identity_array")]
    pub base: PoseArray,
    #[serde(default = "identity_array")]
    pub flange_to_ee: PoseArray,
    /// IK seed for the first waypoint; zeros when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub home: Option<Vec<f64>>,
}

fn identity_array() -> PoseArray {
    Pose::IDENTITY.to_array()
}

#[derive(Debug, Clone)]
pub struct ChainSpec {
    pub chain: SerialChain,
    pub home: Vec<f64>,
    /// Per-joint link mesh, if any.
    pub link_meshes: Vec<Option<TriMesh>>,
}

/// Loads a chain definition and any link meshes it names.
pub fn load_chain(path: &Path) -> Result<ChainSpec> {
    let raw: ChainJson = read_json(path)?;
    let cfg = |e: String| Error::Config(format!("{}: {e}", path.display()));
    let mut joints = Vec::with_capacity(raw.joints.len());
    let mut link_meshes = Vec::with_capacity(raw.joints.len());
    let dir = path.parent().unwrap_or(Path::new("."));
    for j in &raw.joints {
        joints.push(Joint {
            axis: Vec3::from_array(j.axis),
            origin: pose_from_array(j.origin)?,
            limits: (j.limits[0], j.limits[1]),
        });
        link_meshes.push(match &j.mesh {
            Some(m) => Some(crate::meshio::load_mesh(&dir.join(m))?),
            None => None,
        });
    }
    let chain = SerialChain::new(joints, pose_from_array(raw.base)?, pose_from_array(raw.flange_to_ee)?)
        .map_err(|e| cfg(e.to_string()))?;
    let home = raw.home.unwrap_or_else(|| vec![0.0; chain.dof()]);
    if home.len() != chain.dof() {
        return Err(cfg(format!("home has {} values for {} joints", home.len(), chain.dof())));
    }
    Ok(ChainSpec { chain, home, link_meshes })
}

/// Manual canonical poses keyed by mesh id.
pub fn load_pose_overrides(path: &Path) -> Result<BTreeMap<String, Pose>> {
    let raw: BTreeMap<String, PoseArray> = read_json(path)?;
    raw.into_iter().map(|(k, v)| Ok((k, pose_from_array(v)?))).collect()
}

/// 16-bit binary PGM of depth in tenths of a millimetre; background is 0.
pub fn write_pgm(path: &Path, depth: &DepthImage) -> Result<()> {
    let mut out = Vec::with_capacity(depth.width() * depth.height() * 2 + 32);
    write!(out, "P5\n{} {}\n65535\n", depth.width(), depth.height()).expect("writing to a Vec");
    for &d in depth.depths() {
        let v = if d.is_finite() { (d * 1e4).round().clamp(1.0, 65535.0) as u16 } else { 0 };
        out.extend_from_slice(&v.to_be_bytes());
    }
    fs::write(path, out).map_err(Error::io(path))
}

