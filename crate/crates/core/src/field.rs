//! Triplane feature field.
//!
//! Three axis-aligned `R x R` grids of `C`-channel features over `[-1, 1]^2`
//! (XY, XZ, YZ). A point's feature is the sum of the bilinear samples of its
//! three projections. Grid node `i` sits at `-1 + 2 i / (R - 1)`, so the
//! corners of the cube coincide with grid corners.
//!
//! Parameters are stored as `f32` (row-major `[plane][v][u][channel]`);
//! queries and gradients are evaluated in `f64`.

use std::io::Write;
use std::path::Path;

use glam::DVec3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::sampling::triangle_point;
use crate::geometry::TriMesh;
use crate::rng;

pub const FIELD_MAGIC: [u8; 4] = *b"PFLD";
pub const FEATURES_MAGIC: [u8; 4] = *b"PFTS";
pub const FIELD_VERSION: u32 = 1;
pub const INITIAL_TEMPERATURE: f64 = 0.07;
pub const MIN_TEMPERATURE: f64 = 0.01;
pub const MAX_TEMPERATURE: f64 = 1.0;
/// Samples per face when averaging the field, centroid included.
pub const DEFAULT_SAMPLES_PER_FACE: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriplaneField {
    pub resolution: usize,
    pub channels: usize,
    /// Log of the contrastive temperature.
    pub log_temperature: f32,
    pub planes: Vec<f32>,
}

/// Plane index and the two coordinates it is addressed by.
const PLANE_AXES: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

/// Flat parameter offsets (in units of channels) and bilinear weights of the
/// twelve grid nodes a point reads from.
pub type Stencil = [(usize, f64); 12];

impl TriplaneField {
    /// Field with parameters drawn i.i.d. from `N(0, init_scale^2)`.
    pub fn new_triplane(resolution: usize, channels: usize, init_scale: f64, seed: u64) -> Result<TriplaneField> {
        if resolution < 2 {
            return Err(Error::InvalidArgument(format!("resolution {resolution} < 2")));
        }
        if channels == 0 {
            return Err(Error::InvalidArgument("channels must be positive".into()));
        }
        if !(init_scale >= 0.0) || !init_scale.is_finite() {
            return Err(Error::InvalidArgument(format!("init_scale {init_scale}")));
        }
        let n = 3 * resolution * resolution * channels;
        let planes = if init_scale == 0.0 {
            vec![0.0; n]
        } else {
            let normal = Normal::new(0.0, init_scale).expect("valid sigma");
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| normal.sample(&mut r) as f32).collect()
        };
        Ok(TriplaneField {
            resolution,
            channels,
            log_temperature: INITIAL_TEMPERATURE.ln() as f32,
            planes,
        })
    }

    pub fn param_count(&self) -> usize {
        self.planes.len()
    }

    pub fn temperature(&self) -> f64 {
        (self.log_temperature as f64).exp()
    }

    /// Clamps the temperature to `[MIN_TEMPERATURE, MAX_TEMPERATURE]`.
    pub fn clamp_temperature(&mut self) {
        let lo = MIN_TEMPERATURE.ln() as f32;
        let hi = MAX_TEMPERATURE.ln() as f32;
        self.log_temperature = self.log_temperature.clamp(lo, hi);
    }

    /// Node offset of `(plane, v, u)` into `planes`, in scalars.
    pub fn node_offset(&self, plane: usize, v: usize, u: usize) -> usize {
        ((plane * self.resolution + v) * self.resolution + u) * self.channels
    }

    pub fn stencil(&self, p: DVec3) -> Stencil {
        let r = self.resolution;
        let scale = (r - 1) as f64;
        let mut cell = [(0usize, 0.0f64); 3];
        for (k, c) in cell.iter_mut().enumerate() {
            let g = (p[k].clamp(-1.0, 1.0) + 1.0) * 0.5 * scale;
            let i = (g.floor() as usize).min(r - 2);
            *c = (i, g - i as f64);
        }
        let mut out = [(0usize, 0.0f64); 12];
        for (pl, &(a, b)) in PLANE_AXES.iter().enumerate() {
            let (u0, tu) = cell[a];
            let (v0, tv) = cell[b];
            let base = 4 * pl;
            out[base] = (self.node_offset(pl, v0, u0), (1.0 - tu) * (1.0 - tv));
            out[base + 1] = (self.node_offset(pl, v0, u0 + 1), tu * (1.0 - tv));
            out[base + 2] = (self.node_offset(pl, v0 + 1, u0), (1.0 - tu) * tv);
            out[base + 3] = (self.node_offset(pl, v0 + 1, u0 + 1), tu * tv);
        }
        out
    }

    /// Adds the feature at `p` into `out` (length `channels`).
    pub fn query_into(&self, p: DVec3, out: &mut [f64]) {
        let c = self.channels;
        for (off, w) in self.stencil(p) {
            if w == 0.0 {
                continue;
            }
            for (o, &x) in out.iter_mut().zip(&self.planes[off..off + c]) {
                *o += w * x as f64;
            }
        }
    }

    pub fn query_point(&self, p: DVec3) -> Vec<f64> {
        let mut out = vec![0.0; self.channels];
        self.query_into(p, &mut out);
        out
    }

    /// Row-major `points.len() x channels` features in `f64`.
    pub fn query_f64(&self, points: &[DVec3]) -> Vec<f64> {
        let c = self.channels;
        let mut out = vec![0.0; points.len() * c];
        for (p, row) in points.iter().zip(out.chunks_mut(c)) {
            self.query_into(*p, row);
        }
        out
    }

    pub fn query(&self, points: &[DVec3]) -> FeatureSet {
        FeatureSet {
            kind: ElementKind::Point,
            dim: self.channels,
            data: self.query_f64(points).into_iter().map(|x| x as f32).collect(),
        }
    }

    /// Adjoint of the query: scatters `upstream` (`points.len() x channels`)
    /// into `grad` (same layout as `planes`).
    pub fn accumulate_grad(&self, points: &[DVec3], upstream: &[f64], grad: &mut [f64]) {
        let c = self.channels;
        assert_eq!(upstream.len(), points.len() * c);
        assert_eq!(grad.len(), self.planes.len());
        for (p, g) in points.iter().zip(upstream.chunks(c)) {
            for (off, w) in self.stencil(*p) {
                if w == 0.0 {
                    continue;
                }
                for (d, &x) in grad[off..off + c].iter_mut().zip(g) {
                    *d += w * x;
                }
            }
        }
    }

    pub fn query_grad(&self, points: &[DVec3], upstream: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.planes.len()];
        self.accumulate_grad(points, upstream, &mut grad);
        grad
    }

    /// Per-face average over `samples_per_face` points: the centroid plus
    /// random points in cyclic barycentric triples `(a,b,c), (b,c,a),
    /// (c,a,b)`, whose mean is the centroid. Slots left over when
    /// `samples_per_face - 1` is not a multiple of three are filled with the
    /// centroid.
    pub fn face_features(&self, mesh: &TriMesh, samples_per_face: usize, seed: u64) -> Result<FeatureSet> {
        if samples_per_face == 0 {
            return Err(Error::InvalidArgument("samples_per_face must be positive".into()));
        }
        let c = self.channels;
        let triples = (samples_per_face - 1) / 3;
        let centroid_weight = (samples_per_face - 3 * triples) as f64;
        let inv = 1.0 / samples_per_face as f64;
        let mut r = rng::seeded(seed);
        let mut data = vec![0.0f32; mesh.face_count() * c];
        let mut acc = vec![0.0f64; c];
        let mut tmp = vec![0.0f64; c];
        for (f, row) in data.chunks_mut(c).enumerate() {
            let tri = mesh.triangle(f);
            acc.iter_mut().for_each(|x| *x = 0.0);
            self.query_into(mesh.face_centroid(f), &mut acc);
            acc.iter_mut().for_each(|x| *x *= centroid_weight);
            for _ in 0..triples {
                let (_, bary) = triangle_point(&tri, rand::Rng::random(&mut r), rand::Rng::random(&mut r));
                for k in 0..3 {
                    let q = tri[0] * bary[k] + tri[1] * bary[(k + 1) % 3] + tri[2] * bary[(k + 2) % 3];
                    tmp.iter_mut().for_each(|x| *x = 0.0);
                    self.query_into(q, &mut tmp);
                    acc.iter_mut().zip(&tmp).for_each(|(a, t)| *a += t);
                }
            }
            for (o, a) in row.iter_mut().zip(&acc) {
                *o = (a * inv) as f32;
            }
        }
        Ok(FeatureSet {
            kind: ElementKind::Face,
            dim: c,
            data,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 4 * self.planes.len());
        out.extend_from_slice(&FIELD_MAGIC);
        out.extend_from_slice(&FIELD_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.resolution as u32).to_le_bytes());
        out.extend_from_slice(&(self.channels as u32).to_le_bytes());
        out.extend_from_slice(&self.log_temperature.to_le_bytes());
        for x in &self.planes {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<TriplaneField> {
        let header = 20;
        if bytes.len() < header {
            return Err(Error::Truncated {
                expected: header,
                actual: bytes.len(),
            });
        }
        check_magic(&bytes[0..4], FIELD_MAGIC)?;
        let version = read_u32(bytes, 4);
        if version != FIELD_VERSION {
            return Err(Error::Version {
                expected: FIELD_VERSION,
                found: version,
            });
        }
        let resolution = read_u32(bytes, 8) as usize;
        let channels = read_u32(bytes, 12) as usize;
        let log_temperature = f32::from_le_bytes(bytes[16..20].try_into().unwrap());
        if resolution < 2 || channels == 0 {
            return Err(Error::Header(format!("resolution {resolution}, channels {channels}")));
        }
        let n = 3usize
            .checked_mul(resolution)
            .and_then(|x| x.checked_mul(resolution))
            .and_then(|x| x.checked_mul(channels))
            .ok_or_else(|| Error::Header("field size overflows".into()))?;
        let expected = header + 4 * n;
        if bytes.len() != expected {
            return Err(Error::Truncated {
                expected,
                actual: bytes.len(),
            });
        }
        let planes = read_f32s(&bytes[header..]);
        if !log_temperature.is_finite() || planes.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("field parameters".into()));
        }
        Ok(TriplaneField {
            resolution,
            channels,
            log_temperature,
            planes,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TriplaneField> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        TriplaneField::from_bytes(&bytes)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Face,
    Point,
}

/// Row-major per-element features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub kind: ElementKind,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl FeatureSet {
    pub fn new(kind: ElementKind, dim: usize, data: Vec<f32>) -> Result<FeatureSet> {
        if dim == 0 {
            return Err(Error::InvalidArgument("feature dim must be positive".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::ShapeMismatch(format!(
                "{} values not divisible by dim {dim}",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("feature values".into()));
        }
        Ok(FeatureSet { kind, dim, data })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&x| x as f64).collect()
    }

    /// Rows scaled to unit length; near-zero rows become zero.
    pub fn normalized(&self) -> Vec<f64> {
        let mut out = self.to_f64();
        for row in out.chunks_mut(self.dim) {
            let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            let s = if n > 1e-12 { 1.0 / n } else { 0.0 };
            row.iter_mut().for_each(|x| *x *= s);
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.data.len());
        out.extend_from_slice(&FEATURES_MAGIC);
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], kind: ElementKind) -> Result<FeatureSet> {
        if bytes.len() < 12 {
            return Err(Error::Truncated {
                expected: 12,
                actual: bytes.len(),
            });
        }
        check_magic(&bytes[0..4], FEATURES_MAGIC)?;
        let count = read_u32(bytes, 4) as usize;
        let dim = read_u32(bytes, 8) as usize;
        let expected = count
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| n.checked_add(12))
            .ok_or_else(|| Error::Header("feature size overflows".into()))?;
        if bytes.len() != expected {
            return Err(Error::Truncated {
                expected,
                actual: bytes.len(),
            });
        }
        FeatureSet::new(kind, dim, read_f32s(&bytes[12..]))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>, kind: ElementKind) -> Result<FeatureSet> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        FeatureSet::from_bytes(&bytes, kind)
    }
}

/// Loads features produced elsewhere (PFTS), checking the row count when
/// one is expected.
pub fn ingest_external_features(
    path: impl AsRef<Path>,
    kind: ElementKind,
    expected_count: Option<usize>,
) -> Result<FeatureSet> {
    let f = FeatureSet::load(path, kind)?;
    if let Some(n) = expected_count {
        if f.len() != n {
            return Err(Error::ShapeMismatch(format!("{} feature rows, expected {n}", f.len())));
        }
    }
    Ok(f)
}

fn check_magic(found: &[u8], expected: [u8; 4]) -> Result<()> {
    if found != expected {
        return Err(Error::BadMagic {
            expected,
            found: found.try_into().unwrap(),
        });
    }
    Ok(())
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn read_f32s(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}
