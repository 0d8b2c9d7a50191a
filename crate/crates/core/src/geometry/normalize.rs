use glam::DVec3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Aabb, PointSet, TriMesh};

/// Uniform scale about a center: `p' = (p - center) * scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationTransform {
    pub center: DVec3,
    pub scale: f64,
}

impl NormalizationTransform {
    pub const IDENTITY: NormalizationTransform = NormalizationTransform {
        center: DVec3::ZERO,
        scale: 1.0,
    };

    /// Maps the longest axis of `bounds` onto `[-1, 1]`.
    pub fn fit(bounds: &Aabb) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::EmptyShape);
        }
        let half = 0.5 * bounds.extent().max_element();
        if !(half > 0.0) {
            return Err(Error::Degenerate("zero-extent bounding box".into()));
        }
        let center = bounds.center();
        // Already normalized input maps to the exact identity.
        if center.abs().max_element() <= 1e-12 && (half - 1.0).abs() <= 1e-12 {
            return Ok(Self::IDENTITY);
        }
        Ok(NormalizationTransform {
            center,
            scale: 1.0 / half,
        })
    }

    pub fn apply(&self, p: DVec3) -> DVec3 {
        (p - self.center) * self.scale
    }

    pub fn invert(&self, p: DVec3) -> DVec3 {
        p / self.scale + self.center
    }
}

pub fn normalize_mesh(mesh: &TriMesh) -> Result<(TriMesh, NormalizationTransform)> {
    let t = NormalizationTransform::fit(&mesh.bounds())?;
    let out = mesh.map_vertices(|p| t.apply(p).clamp(DVec3::splat(-1.0), DVec3::splat(1.0)));
    Ok((out, t))
}

pub fn normalize_points(points: &PointSet) -> Result<(PointSet, NormalizationTransform)> {
    if points.is_empty() {
        return Err(Error::EmptyShape);
    }
    let t = NormalizationTransform::fit(&points.bounds())?;
    let mut out = points.clone();
    for p in &mut out.points {
        *p = t.apply(*p).clamp(DVec3::splat(-1.0), DVec3::splat(1.0));
    }
    Ok((out, t))
}
