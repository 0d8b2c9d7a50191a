//! Wavefront OBJ, PLY (ascii / binary little-endian) and XYZ readers.

use std::fmt::Write as _;
use std::path::Path;

use glam::DVec3;

use crate::error::{Error, Result};

use super::{PointSet, TriMesh};

/// Loads an OBJ mesh. Polygons are fan-triangulated from their first vertex;
/// records other than `v` and `f` are ignored.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, path)
}

pub fn parse_obj(text: &str, path: &Path) -> Result<TriMesh> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let mut c = [0.0f64; 3];
                for slot in &mut c {
                    let tok = it
                        .next()
                        .ok_or_else(|| parse_err(line_no, "vertex needs 3 coordinates".into()))?;
                    *slot = tok
                        .parse()
                        .map_err(|_| parse_err(line_no, format!("bad coordinate {tok:?}")))?;
                }
                let v = DVec3::from_array(c);
                if !v.is_finite() {
                    return Err(parse_err(line_no, "non-finite vertex".into()));
                }
                vertices.push(v);
            }
            Some("f") => {
                let mut poly = Vec::with_capacity(4);
                for tok in it {
                    let idx_str = tok.split('/').next().unwrap_or("");
                    let idx: i64 = idx_str
                        .parse()
                        .map_err(|_| parse_err(line_no, format!("bad face index {tok:?}")))?;
                    let resolved = match idx {
                        0 => return Err(parse_err(line_no, "face index 0".into())),
                        i if i > 0 => i - 1,
                        i => vertices.len() as i64 + i,
                    };
                    if resolved < 0 || resolved as usize >= vertices.len() {
                        return Err(parse_err(
                            line_no,
                            format!("face index {idx} out of range ({} vertices)", vertices.len()),
                        ));
                    }
                    poly.push(resolved as u32);
                }
                if poly.len() < 3 {
                    return Err(parse_err(line_no, "face needs at least 3 vertices".into()));
                }
                for k in 1..poly.len() - 1 {
                    faces.push([poly[0], poly[k], poly[k + 1]]);
                }
            }
            _ => {}
        }
    }
    if faces.is_empty() {
        return Err(Error::EmptyMesh);
    }
    log::debug!(
        "loaded {}: {} vertices, {} faces",
        path.display(),
        vertices.len(),
        faces.len()
    );
    TriMesh::new(vertices, faces)
}

pub fn write_obj(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Loads a point set from `.ply` or whitespace-separated XYZ text (any other
/// extension). XYZ lines carry 3 coordinates, optionally followed by a normal.
pub fn load_point_set(path: impl AsRef<Path>) -> Result<PointSet> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let is_ply = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ply")) || bytes.starts_with(b"ply");
    let set = if is_ply {
        parse_ply(&bytes)?
    } else {
        parse_xyz(&String::from_utf8_lossy(&bytes), path)?
    };
    if let Some(index) = set.points.iter().position(|p| !p.is_finite()) {
        return Err(Error::NonFiniteCoordinate { index });
    }
    Ok(set)
}

fn parse_xyz(text: &str, path: &Path) -> Result<PointSet> {
    let mut points = Vec::new();
    let mut normals = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
        if vals.len() < 3 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: "expected at least 3 values".into(),
            });
        }
        points.push(DVec3::new(vals[0], vals[1], vals[2]));
        if vals.len() >= 6 {
            normals.push(DVec3::new(vals[3], vals[4], vals[5]));
        }
    }
    let has_normals = !normals.is_empty() && normals.len() == points.len();
    Ok(PointSet {
        points,
        normals: has_normals.then_some(normals),
        ..Default::default()
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
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
    fn parse(s: &str) -> Option<Scalar> {
        Some(match s {
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

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
enum Property {
    Scalar(String, Scalar),
    List(Scalar, Scalar),
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

fn parse_ply(bytes: &[u8]) -> Result<PointSet> {
    let header_end = find_subslice(bytes, b"end_header").ok_or_else(|| Error::Header("missing end_header".into()))?;
    let mut body_start = header_end + b"end_header".len();
    if bytes.get(body_start) == Some(&b'\r') {
        body_start += 1;
    }
    if bytes.get(body_start) == Some(&b'\n') {
        body_start += 1;
    }
    let header = std::str::from_utf8(&bytes[..header_end]).map_err(|_| Error::Header("header is not utf-8".into()))?;
    let mut lines = header.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(Error::Header("missing 'ply' magic".into()));
    }
    let mut binary = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", "ascii", _] => binary = Some(false),
            ["format", "binary_little_endian", _] => binary = Some(true),
            ["format", other, ..] => return Err(Error::Header(format!("unsupported format {other}"))),
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::Header(format!("bad element count {count:?}")))?,
                props: Vec::new(),
            }),
            ["property", "list", ct, it, _name] => {
                let (ct, it) = Scalar::parse(ct)
                    .zip(Scalar::parse(it))
                    .ok_or_else(|| Error::Header(format!("bad list property: {line}")))?;
                elements
                    .last_mut()
                    .ok_or_else(|| Error::Header("property before element".into()))?
                    .props
                    .push(Property::List(ct, it));
            }
            ["property", ty, name] => {
                let ty = Scalar::parse(ty).ok_or_else(|| Error::Header(format!("unknown property type {ty:?}")))?;
                elements
                    .last_mut()
                    .ok_or_else(|| Error::Header("property before element".into()))?
                    .props
                    .push(Property::Scalar(name.to_string(), ty));
            }
            _ => return Err(Error::Header(format!("unrecognized header line {line:?}"))),
        }
    }
    let binary = binary.ok_or_else(|| Error::Header("missing format line".into()))?;
    let vertex_idx = elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::Header("no vertex element".into()))?;
    let vertex = &elements[vertex_idx];
    let find = |n: &str| {
        vertex
            .props
            .iter()
            .position(|p| matches!(p, Property::Scalar(name, _) if name == n))
    };
    let (xi, yi, zi) = match (find("x"), find("y"), find("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(Error::Header("vertex element lacks x/y/z".into())),
    };
    let normal_idx = match (find("nx"), find("ny"), find("nz")) {
        (Some(a), Some(b), Some(c)) => Some((a, b, c)),
        _ => None,
    };

    let mut points = Vec::with_capacity(vertex.count);
    let mut normals = Vec::new();
    let mut push = |vals: &[f64]| {
        points.push(DVec3::new(vals[xi], vals[yi], vals[zi]));
        if let Some((a, b, c)) = normal_idx {
            normals.push(DVec3::new(vals[a], vals[b], vals[c]));
        }
    };

    let body = &bytes[body_start..];
    if binary {
        let mut off = 0usize;
        let truncated = || Error::Header("binary body truncated".into());
        for (ei, el) in elements.iter().enumerate() {
            if ei > vertex_idx {
                break;
            }
            let mut vals = vec![0.0; el.props.len()];
            for _ in 0..el.count {
                for (pi, p) in el.props.iter().enumerate() {
                    match p {
                        Property::Scalar(_, ty) => {
                            let b = body.get(off..off + ty.size()).ok_or_else(truncated)?;
                            vals[pi] = ty.read_le(b);
                            off += ty.size();
                        }
                        Property::List(ct, it) => {
                            let b = body.get(off..off + ct.size()).ok_or_else(truncated)?;
                            let n = ct.read_le(b) as usize;
                            off += ct.size() + n * it.size();
                        }
                    }
                }
                if ei == vertex_idx {
                    push(&vals);
                }
            }
        }
    } else {
        let text = String::from_utf8_lossy(body);
        let mut rows = text.lines().filter(|l| !l.trim().is_empty());
        for (ei, el) in elements.iter().enumerate() {
            if ei > vertex_idx {
                break;
            }
            for row in 0..el.count {
                let line = rows
                    .next()
                    .ok_or_else(|| Error::Header(format!("element {} has fewer than {} rows", el.name, el.count)))?;
                if ei != vertex_idx {
                    continue;
                }
                let vals: Vec<f64> = line
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Header(format!("bad vertex row {row}: {line:?}")))?;
                if vals.len() < el.props.len() {
                    return Err(Error::Header(format!("short vertex row {row}")));
                }
                push(&vals);
            }
        }
    }
    let has_normals = normal_idx.is_some();
    Ok(PointSet {
        points,
        normals: has_normals.then_some(normals),
        ..Default::default()
    })
}

fn find_subslice(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}
