//! Mesh and point-cloud files: OBJ (vertices and faces only), binary
//! little-endian PLY meshes and ASCII PLY clouds.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use demoforge_core::mesh::MeshError;
use demoforge_core::{SegmentedPointCloud, TriMesh, Vec3};

use crate::{Error, Result};

/// Loads `.obj` or `.ply` by extension.
pub fn load_mesh(path: &Path) -> Result<TriMesh> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("obj") => {
            let text = fs::read_to_string(path).map_err(Error::io(path))?;
            parse_obj(&text, path)
        }
        Some("ply") => {
            let bytes = fs::read(path).map_err(Error::io(path))?;
            parse_ply(&bytes, path)
        }
        _ => Err(Error::parse(path, 0, "expected an .obj or .ply file")),
    }
}

fn build(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>, lines: &[usize], path: &Path) -> Result<TriMesh> {
    TriMesh::new(vertices, faces).map_err(|e| match e {
        MeshError::IndexOutOfRange { face, .. } | MeshError::DegenerateMesh { face, .. } => {
            Error::parse(path, lines.get(face).copied().unwrap_or(0), e.to_string())
        }
        other => Error::Mesh(other),
    })
}

/// `v` and `f` records; polygons are fanned, negative indices count back
/// from the last vertex, texture and normal indices are ignored.
pub fn parse_obj(text: &str, path: &Path) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut face_lines = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let n = n + 1;
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let mut c = [0.0; 3];
                for v in c.iter_mut() {
                    *v = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::parse(path, n, "vertex needs three numbers"))?;
                }
                vertices.push(Vec3::from_array(c));
            }
            Some("f") => {
                let mut idx = Vec::with_capacity(4);
                for tok in it {
                    let first = tok.split('/').next().unwrap_or("");
                    let i: i64 = first.parse().map_err(|_| Error::parse(path, n, format!("bad face index {tok:?}")))?;
                    let resolved = match i {
                        0 => return Err(Error::parse(path, n, "face index 0")),
                        i if i > 0 => i - 1,
                        i => vertices.len() as i64 + i,
                    };
                    if resolved < 0 || resolved > u32::MAX as i64 {
                        return Err(Error::parse(path, n, format!("face index {i} out of range")));
                    }
                    idx.push(resolved as u32);
                }
                if idx.len() < 3 {
                    return Err(Error::parse(path, n, "face needs at least three vertices"));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                    face_lines.push(n);
                }
            }
            _ => {}
        }
    }
    build(vertices, faces, &face_lines, path)
}

pub fn obj_string(mesh: &TriMesh) -> String {
    let mut s = String::new();
    for v in mesh.vertices() {
        writeln!(s, "v {} {} {}", v.x, v.y, v.z).expect("writing to a String");
    }
    for f in mesh.faces() {
        writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).expect("writing to a String");
    }
    s
}

pub fn save_obj(path: &Path, mesh: &TriMesh) -> Result<()> {
    fs::write(path, obj_string(mesh)).map_err(Error::io(path))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Scalar> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::parse(self.path, 0, "unexpected end of binary data"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn scalar(&mut self, t: Scalar) -> Result<f64> {
        let b = self.take(t.size())?;
        Ok(t.read(b))
    }
}

/// Binary little-endian PLY with a `vertex` element carrying `x`, `y`, `z`
/// and a `face` element carrying a `vertex_indices` (or `vertex_index`) list.
pub fn parse_ply(bytes: &[u8], path: &Path) -> Result<TriMesh> {
    let end = bytes
        .windows(11)
        .position(|w| w == b"end_header\n")
        .ok_or_else(|| Error::parse(path, 1, "missing end_header"))?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::parse(path, 1, "header is not UTF-8"))?;
    let mut elements: Vec<Element> = Vec::new();
    let mut lines = header.lines().enumerate();
    if lines.next().map(|(_, l)| l.trim()) != Some("ply") {
        return Err(Error::parse(path, 1, "not a PLY file"));
    }
    for (n, line) in lines {
        let n = n + 1;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "binary_little_endian", _] => {}
            ["format", other, ..] => return Err(Error::parse(path, n, format!("unsupported format {other}"))),
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| Error::parse(path, n, "bad element count"))?,
                properties: Vec::new(),
            }),
            ["property", "list", ct, it, name] => {
                let (Some(ct), Some(it)) = (Scalar::parse(ct), Scalar::parse(it)) else {
                    return Err(Error::parse(path, n, "unknown list type"));
                };
                let el = elements.last_mut().ok_or_else(|| Error::parse(path, n, "property before element"))?;
                el.properties.push(Property::List(name.to_string(), ct, it));
            }
            ["property", t, name] => {
                let t = Scalar::parse(t).ok_or_else(|| Error::parse(path, n, format!("unknown type {t}")))?;
                let el = elements.last_mut().ok_or_else(|| Error::parse(path, n, "property before element"))?;
                el.properties.push(Property::Scalar(name.to_string(), t));
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            _ => return Err(Error::parse(path, n, format!("unexpected header line {line:?}"))),
        }
    }
    if !header.lines().any(|l| l.starts_with("format ")) {
        return Err(Error::parse(path, 1, "missing format line"));
    }

    let mut cur = Cursor { bytes, pos: end + 11, path };
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut face_rows = Vec::new();
    for el in &elements {
        let xyz: Vec<Option<usize>> = el
            .properties
            .iter()
            .map(|p| match p {
                Property::Scalar(name, _) => ["x", "y", "z"].iter().position(|a| a == name),
                Property::List(..) => None,
            })
            .collect();
        if el.name == "vertex" && (0..3).any(|k| !xyz.contains(&Some(k))) {
            return Err(Error::parse(path, 0, "vertex element lacks x, y or z"));
        }
        for row in 0..el.count {
            let mut v = [0.0; 3];
            for (p, slot) in el.properties.iter().zip(&xyz) {
                match p {
                    Property::Scalar(_, t) => {
                        let x = cur.scalar(*t)?;
                        if let Some(k) = slot {
                            v[*k] = x;
                        }
                    }
                    Property::List(name, ct, it) => {
                        let count = cur.scalar(*ct)?;
                        if !(count >= 0.0) {
                            return Err(Error::parse(path, 0, "negative list length"));
                        }
                        let mut idx = Vec::with_capacity(count as usize);
                        for _ in 0..count as usize {
                            idx.push(cur.scalar(*it)?);
                        }
                        if el.name == "face" && (name == "vertex_indices" || name == "vertex_index") {
                            if idx.len() < 3 || idx.iter().any(|&i| i < 0.0 || i > u32::MAX as f64) {
                                return Err(Error::parse(path, 0, format!("face {row} has invalid indices")));
                            }
                            for k in 1..idx.len() - 1 {
                                faces.push([idx[0] as u32, idx[k] as u32, idx[k + 1] as u32]);
                                face_rows.push(row);
                            }
                        }
                    }
                }
            }
            if el.name == "vertex" {
                vertices.push(Vec3::from_array(v));
            }
        }
    }
    build(vertices, faces, &face_rows, path)
}

/// Binary little-endian PLY with float vertices and int face lists.
pub fn ply_bytes(mesh: &TriMesh) -> Vec<u8> {
    let mut out = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices().len(),
        mesh.faces().len()
    )
    .into_bytes();
    for v in mesh.vertices() {
        for c in v.to_f32() {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    for f in mesh.faces() {
        out.push(3);
        for i in f {
            out.extend_from_slice(&(*i as i32).to_le_bytes());
        }
    }
    out
}

/// ASCII PLY with `x y z label` per point.
pub fn cloud_ply_string(cloud: &SegmentedPointCloud) -> String {
    let mut s = format!(
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nproperty uchar label\nend_header\n",
        cloud.len()
    );
    for (p, l) in cloud.iter() {
        writeln!(s, "{} {} {} {}", p[0], p[1], p[2], l.code()).expect("writing to a String");
    }
    s
}

pub fn save_cloud_ply(path: &Path, cloud: &SegmentedPointCloud) -> Result<()> {
    fs::write(path, cloud_ply_string(cloud)).map_err(Error::io(path))
}
