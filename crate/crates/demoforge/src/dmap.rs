//! Descriptor map files: `DMAP`, then `u32` height, width and dim, then the
//! `height × width × dim` little-endian `f32` values, row-major.

use std::fs;
use std::path::{Path, PathBuf};

use demoforge_core::correspondence::{BackendError, DescriptorBackend, DescriptorMap, RenderedView};
use demoforge_core::render::shade_lambert;
use demoforge_core::Pose;
use serde::{Deserialize, Serialize};

use crate::files::{read_json, write_json, CameraJson};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DMAP";
const HEADER: usize = 16;
/// Refuse headers describing more than this many values.
pub const MAX_VALUES: usize = 1 << 30;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DmapError {
    #[error("bad magic")]
    Magic,
    #[error("truncated: expected {expected} bytes, found {found}")]
    Length { expected: usize, found: usize },
    #[error("header {height}x{width}x{dim} is empty or too large")]
    Header { height: u32, width: u32, dim: u32 },
    #[error("{0}")]
    Map(String),
}

pub fn encode(map: &DescriptorMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 4 * map.data().len());
    out.extend_from_slice(MAGIC);
    for v in [map.height(), map.width(), map.dim()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in map.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<DescriptorMap, DmapError> {
    if bytes.len() < HEADER {
        return Err(DmapError::Length { expected: HEADER, found: bytes.len() });
    }
    if &bytes[..4] != MAGIC {
        return Err(DmapError::Magic);
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes"));
    let (height, width, dim) = (word(0), word(1), word(2));
    let values = (height as usize).checked_mul(width as usize).and_then(|n| n.checked_mul(dim as usize));
    let values = match values {
        Some(n) if n > 0 && n <= MAX_VALUES => n,
        _ => return Err(DmapError::Header { height, width, dim }),
    };
    let expected = HEADER + 4 * values;
    if bytes.len() != expected {
        return Err(DmapError::Length { expected, found: bytes.len() });
    }
    let data = bytes[HEADER..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
    DescriptorMap::new(width as usize, height as usize, dim as usize, data).map_err(|e| DmapError::Map(e.to_string()))
}

pub fn read(path: &Path) -> Result<DescriptorMap> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    decode(&bytes).map_err(|e| Error::parse(path, 0, e.to_string()))
}

pub fn write(path: &Path, map: &DescriptorMap) -> Result<()> {
    fs::write(path, encode(map)).map_err(Error::io(path))
}

/// Identity of the model that produced a descriptor directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub model: String,
    pub dim: usize,
}

/// Precomputed descriptor maps at `<dir>/<mesh_id>/view_<i>.dmap`, with an
/// optional `<dir>/model.json`.
#[derive(Debug, Clone)]
pub struct DescriptorFilesBackend {
    dir: PathBuf,
    model: Option<ModelInfo>,
}

impl DescriptorFilesBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        if !dir.is_dir() {
            return Err(Error::Config(format!("descriptor directory {} does not exist", dir.display())));
        }
        let info = dir.join("model.json");
        let model = if info.exists() { Some(read_json(&info)?) } else { None };
        Ok(Self { dir, model })
    }

    pub fn view_path(&self, mesh_id: &str, view: usize) -> PathBuf {
        view_path(&self.dir, mesh_id, view)
    }
}

pub fn view_path(dir: &Path, mesh_id: &str, view: usize) -> PathBuf {
    dir.join(mesh_id).join(format!("view_{view}.dmap"))
}

impl DescriptorBackend for DescriptorFilesBackend {
    fn describe(&self, view: &RenderedView<'_>) -> std::result::Result<DescriptorMap, BackendError> {
        let map = read(&self.view_path(view.mesh_id, view.view_index)).map_err(|e| BackendError::new(e.to_string()))?;
        if let Some(m) = &self.model {
            if m.dim != map.dim() {
                return Err(BackendError::new(format!("map has dim {}, model.json says {}", map.dim(), m.dim)));
            }
        }
        Ok(map)
    }

    fn name(&self) -> String {
        match &self.model {
            Some(m) => format!("descriptor-files:{}", m.model),
            None => String::from("descriptor-files"),
        }
    }
}

/// Writes the rig renders an external model needs: `view_<i>.png` (Lambert
/// shaded, light at the camera) and `view_<i>.json` (camera) under
/// `<dir>/<mesh_id>/`.
pub fn export_views(dir: &Path, view: &RenderedView<'_>) -> Result<()> {
    let sub = dir.join(view.mesh_id);
    fs::create_dir_all(&sub).map_err(Error::io(&sub))?;
    let png = sub.join(format!("view_{}.png", view.view_index));
    fs::write(&png, shaded_png(view)?).map_err(Error::io(&png))?;
    write_json(&sub.join(format!("view_{}.json", view.view_index)), &CameraJson::from(view.camera))
}

/// Grayscale PNG of the view as the descriptor service expects it.
pub fn shaded_png(view: &RenderedView<'_>) -> Result<Vec<u8>> {
    let gray = shade_lambert(view.depth, view.mesh, &Pose::IDENTITY, view.camera);
    let (w, h) = (view.depth.width() as u32, view.depth.height() as u32);
    let img = image::GrayImage::from_raw(w, h, gray).expect("one byte per pixel");
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).map_err(|e| Error::Service(format!("PNG encoding: {e}")))?;
    Ok(out.into_inner())
}
