use glam::DVec3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::mesh::Aabb;

/// Pixel a point was unprojected from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRef {
    pub view: u32,
    pub row: u32,
    pub col: u32,
}

/// A set of 3D points with optional per-point provenance.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    pub points: Vec<DVec3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normals: Option<Vec<DVec3>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_face: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_pixel: Option<Vec<PixelRef>>,
}

impl PointSet {
    pub fn new(points: Vec<DVec3>) -> Result<Self> {
        if let Some(index) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFiniteCoordinate { index });
        }
        Ok(PointSet {
            points,
            ..Default::default()
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(&self.points)
    }

    /// Per-element label lookup through `source_face`.
    pub fn face_labels_to_points(&self, face_labels: &[u32]) -> Result<Vec<u32>> {
        let src = self
            .source_face
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("point set has no source faces".into()))?;
        src.iter()
            .map(|&f| {
                face_labels.get(f as usize).copied().ok_or_else(|| {
                    Error::ShapeMismatch(format!(
                        "point refers to face {f} but only {} face labels given",
                        face_labels.len()
                    ))
                })
            })
            .collect()
    }
}
