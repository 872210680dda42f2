//! Dataset directories: `manifest.json` plus `demo_<k>/clouds.bin`
//! (`f32` LE, steps × N × [x, y, z, label]), `demo_<k>/traj.bin` (`f64` LE,
//! steps × [w, x, y, z, tx, ty, tz, gripper]) and, when joint angles exist,
//! `demo_<k>/joints.bin` (`f64` LE, steps × dof).

use std::fs::{self, File};
use std::io::{Read, Seek, SeekFrom};
use std::path::Path;

use demoforge_core::demo::{DemoStep, Demonstration, KeypointAnnotation, SkillRange};
use demoforge_core::{Label, Pose, SegmentedPointCloud};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::files::{pose_from_array, read_json, write_json, KeypointsJson, PoseArray};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";
const POINT_BYTES: usize = 16;
const TRAJ_BYTES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    /// Points per frame.
    #[serde(rename = "N")]
    pub cloud_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    pub demos: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Directory of the demo's binary files, relative to the dataset root.
    pub dir: String,
    pub mesh_id: String,
    pub seed: u64,
    pub steps: usize,
    /// Object pose at the first step.
    pub pose: PoseArray,
    pub t_grasp: usize,
    pub skill_range: [usize; 2],
    /// Keypoints in the object frame.
    pub keypoints: KeypointsJson,
    /// Joint count of `joints.bin`, 0 when absent.
    #[serde(default)]
    pub joints: usize,
}

/// Identity of a demonstration inside a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoMeta<'a> {
    pub dir: &'a str,
    pub mesh_id: &'a str,
    pub seed: u64,
}

fn joint_count(demo: &Demonstration) -> Result<usize> {
    let dof = demo.steps()[0].proprioception.len();
    if let Some(t) = demo.steps().iter().position(|s| s.proprioception.len() != dof) {
        return Err(Error::Dataset(format!("step {t} has {} joint values, step 0 has {dof}", demo.steps()[t].proprioception.len())));
    }
    Ok(dof)
}

pub fn clouds_bytes(demo: &Demonstration) -> Vec<u8> {
    let mut out = Vec::with_capacity(demo.len() * demo.cloud_size() * POINT_BYTES);
    for s in demo.steps() {
        for (p, l) in s.cloud.iter() {
            for v in [p[0], p[1], p[2], l.code() as f32] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

pub fn traj_bytes(demo: &Demonstration) -> Vec<u8> {
    let mut out = Vec::with_capacity(demo.len() * TRAJ_BYTES);
    for s in demo.steps() {
        for v in s.ee_pose.to_array().into_iter().chain([s.gripper]) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn joints_bytes(demo: &Demonstration) -> Vec<u8> {
    demo.steps().iter().flat_map(|s| s.proprioception.iter().flat_map(|v| v.to_le_bytes())).collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(Error::io(path))
}

/// Writes one demonstration's binary files and returns its manifest entry.
pub fn write_demo(root: &Path, meta: DemoMeta<'_>, demo: &Demonstration) -> Result<ManifestEntry> {
    let dir = root.join(meta.dir);
    fs::create_dir_all(&dir).map_err(Error::io(&dir))?;
    let joints = joint_count(demo)?;
    write_file(&dir.join("clouds.bin"), &clouds_bytes(demo))?;
    write_file(&dir.join("traj.bin"), &traj_bytes(demo))?;
    let jpath = dir.join("joints.bin");
    if joints > 0 {
        write_file(&jpath, &joints_bytes(demo))?;
    } else if jpath.exists() {
        fs::remove_file(&jpath).map_err(Error::io(&jpath))?;
    }
    let skill = demo.skill_range();
    Ok(ManifestEntry {
        dir: meta.dir.to_string(),
        mesh_id: meta.mesh_id.to_string(),
        seed: meta.seed,
        steps: demo.len(),
        pose: demo.source_object_pose().to_array(),
        t_grasp: demo.t_grasp(),
        skill_range: [skill.start, skill.end],
        keypoints: demo.keypoints().into(),
        joints,
    })
}

pub fn write_manifest(root: &Path, manifest: &Manifest) -> Result<()> {
    fs::create_dir_all(root).map_err(Error::io(root))?;
    write_json(&root.join(MANIFEST), manifest)
}

/// Writes every demonstration (in parallel) then the manifest. All demos must
/// have `cloud_size` points per frame.
pub fn write_dataset(
    root: &Path,
    cloud_size: usize,
    master_seed: Option<u64>,
    demos: &[(DemoMeta<'_>, &Demonstration)],
) -> Result<Manifest> {
    if let Some((m, d)) = demos.iter().find(|(_, d)| d.cloud_size() != cloud_size) {
        return Err(Error::Dataset(format!("{} has {} points per frame, dataset N is {cloud_size}", m.dir, d.cloud_size())));
    }
    fs::create_dir_all(root).map_err(Error::io(root))?;
    let entries = demos.par_iter().map(|(m, d)| write_demo(root, *m, d)).collect::<Result<Vec<_>>>()?;
    let manifest = Manifest { schema_version: SCHEMA_VERSION, cloud_size, master_seed, demos: entries };
    write_manifest(root, &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(root: &Path) -> Result<Manifest> {
    let path = root.join(MANIFEST);
    let m: Manifest = read_json(&path)?;
    if m.schema_version != SCHEMA_VERSION {
        return Err(Error::Dataset(format!("{}: schema version {} (expected {SCHEMA_VERSION})", path.display(), m.schema_version)));
    }
    Ok(m)
}

fn read_exact_len(path: &Path, expected: usize) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    if bytes.len() != expected {
        return Err(Error::Dataset(format!("{}: {} bytes, expected {expected}", path.display(), bytes.len())));
    }
    Ok(bytes)
}

fn f32s(bytes: &[u8]) -> impl Iterator<Item = f32> + '_ {
    bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
}

fn f64s(bytes: &[u8]) -> impl Iterator<Item = f64> + '_ {
    bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
}

fn decode_cloud(bytes: &[u8], path: &Path) -> Result<SegmentedPointCloud> {
    let vals: Vec<f32> = f32s(bytes).collect();
    let mut points = Vec::with_capacity(vals.len() / 4);
    let mut labels = Vec::with_capacity(vals.len() / 4);
    for p in vals.chunks_exact(4) {
        let code = p[3];
        if code.fract() != 0.0 || !(0.0..=255.0).contains(&code) {
            return Err(Error::Dataset(format!("{}: label {code} is not a label code", path.display())));
        }
        labels.push(Label::from_code(code as u8)?);
        points.push([p[0], p[1], p[2]]);
    }
    Ok(SegmentedPointCloud::new(points, labels)?)
}

fn entry<'a>(manifest: &'a Manifest, index: usize) -> Result<&'a ManifestEntry> {
    manifest.demos.get(index).ok_or(Error::IndexOutOfRange { index, len: manifest.demos.len() })
}

/// Reads demonstration `index` (position in the manifest).
pub fn read_demo(root: &Path, manifest: &Manifest, index: usize) -> Result<Demonstration> {
    let e = entry(manifest, index)?;
    let dir = root.join(&e.dir);
    let n = manifest.cloud_size;
    let traj_path = dir.join("traj.bin");
    let traj = read_exact_len(&traj_path, e.steps * TRAJ_BYTES)?;
    let clouds_path = dir.join("clouds.bin");
    let clouds = read_exact_len(&clouds_path, e.steps * n * POINT_BYTES)?;
    let joints = if e.joints > 0 {
        let p = dir.join("joints.bin");
        let b = read_exact_len(&p, e.steps * e.joints * 8)?;
        f64s(&b).collect::<Vec<_>>()
    } else {
        Vec::new()
    };
    let mut steps = Vec::with_capacity(e.steps);
    for (t, row) in traj.chunks_exact(TRAJ_BYTES).enumerate() {
        let v: Vec<f64> = f64s(row).collect();
        let ee_pose = pose_from_array(v[..7].try_into().expect("7 values"))
            .map_err(|err| Error::Dataset(format!("{}: step {t}: {err}", traj_path.display())))?;
        let cloud = decode_cloud(&clouds[t * n * POINT_BYTES..(t + 1) * n * POINT_BYTES], &clouds_path)?;
        let proprioception = if e.joints > 0 { joints[t * e.joints..(t + 1) * e.joints].to_vec() } else { Vec::new() };
        steps.push(DemoStep { time_index: t, ee_pose, gripper: v[7], proprioception, cloud });
    }
    let skill = SkillRange::new(e.skill_range[0], e.skill_range[1])?;
    let pose: Pose =
        pose_from_array(e.pose).map_err(|err| Error::Dataset(format!("{}: pose: {err}", e.dir)))?;
    Ok(Demonstration::new(steps, e.t_grasp, skill, pose, KeypointAnnotation::from(e.keypoints))?)
}

/// Reads a single frame's cloud without loading the whole demonstration.
pub fn read_frame(root: &Path, manifest: &Manifest, index: usize, frame: usize) -> Result<SegmentedPointCloud> {
    let e = entry(manifest, index)?;
    if frame >= e.steps {
        return Err(Error::IndexOutOfRange { index: frame, len: e.steps });
    }
    let path = root.join(&e.dir).join("clouds.bin");
    let size = manifest.cloud_size * POINT_BYTES;
    let mut f = File::open(&path).map_err(Error::io(&path))?;
    let len = f.metadata().map_err(Error::io(&path))?.len() as usize;
    if len != e.steps * size {
        return Err(Error::Dataset(format!("{}: {len} bytes, expected {}", path.display(), e.steps * size)));
    }
    f.seek(SeekFrom::Start((frame * size) as u64)).map_err(Error::io(&path))?;
    let mut buf = vec![0u8; size];
    f.read_exact(&mut buf).map_err(Error::io(&path))?;
    decode_cloud(&buf, &path)
}
