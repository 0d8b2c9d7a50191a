//! Loading meshes, fields, features and proposals from disk.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use trifield_core::field::{DEFAULT_SAMPLES_PER_FACE, FEATURES_MAGIC, FIELD_MAGIC};
use trifield_core::geometry::{load_mesh, normalize_mesh, sample_surface, PointSet};
use trifield_core::proposals::{ingest_labels, load_mask_manifest, proposals_from_masks};
use trifield_core::{ElementKind, FeatureSet, LabelSet, NormalizationTransform, PartProposal, TriMesh, TriplaneField};

/// Samples drawn for the canonical element set when a manifest gives none.
pub const DEFAULT_POINTS: usize = 100_000;

/// Loads an OBJ and maps it into the unit cube.
pub fn load_normalized(path: &Path) -> Result<(TriMesh, NormalizationTransform)> {
    let mesh = load_mesh(path).with_context(|| format!("loading mesh {}", path.display()))?;
    Ok(normalize_mesh(&mesh)?)
}

/// A field (PFLD) or precomputed features (PFTS), told apart by magic.
pub enum FeatureSource {
    Field(TriplaneField),
    Features(FeatureSet),
}

impl FeatureSource {
    pub fn load(path: &Path) -> Result<FeatureSource> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        FeatureSource::from_bytes(&bytes).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<FeatureSource> {
        match bytes.get(..4) {
            Some(m) if m == FIELD_MAGIC => Ok(FeatureSource::Field(TriplaneField::from_bytes(bytes)?)),
            Some(m) if m == FEATURES_MAGIC => Ok(FeatureSource::Features(FeatureSet::from_bytes(
                bytes,
                ElementKind::Face,
            )?)),
            _ => bail!("neither a field (PFLD) nor a feature file (PFTS)"),
        }
    }

    /// Per-face features of `mesh` (already normalized).
    pub fn face_features(&self, mesh: &TriMesh) -> Result<FeatureSet> {
        match self {
            FeatureSource::Field(f) => Ok(f.face_features(mesh, DEFAULT_SAMPLES_PER_FACE, 0)?),
            FeatureSource::Features(f) => {
                if f.len() != mesh.face_count() {
                    bail!(
                        "feature file has {} rows; the mesh has {} faces",
                        f.len(),
                        mesh.face_count()
                    );
                }
                Ok(f.clone())
            }
        }
    }
}

pub fn load_face_features(mesh: &TriMesh, path: &Path) -> Result<FeatureSet> {
    FeatureSource::load(path)?.face_features(mesh)
}

/// Proposal file written by `proposals project`: proposals over the
/// canonical set drawn with `points` and `seed`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProposalFile {
    pub points: usize,
    pub seed: u64,
    pub proposals: Vec<PartProposal>,
}

/// Supervision for `fit`. Paths are relative to the manifest.
///
/// ```json
/// {"points": 100000, "seed": 0, "labels": "labels.json", "masks": "masks.json"}
/// ```
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalsManifest {
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default)]
    pub seed: u64,
    /// Label set over faces or canonical elements.
    #[serde(default)]
    pub labels: Option<PathBuf>,
    /// Mask manifest; cameras are in normalized coordinates.
    #[serde(default)]
    pub masks: Option<PathBuf>,
    /// Output of `proposals project`.
    #[serde(default)]
    pub proposals: Option<PathBuf>,
}

fn default_points() -> usize {
    DEFAULT_POINTS
}

impl ProposalsManifest {
    pub fn load(path: &Path) -> Result<ProposalsManifest> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading proposals manifest {}", path.display()))?;
        let mut m: ProposalsManifest =
            serde_json::from_str(&text).with_context(|| format!("parsing proposals manifest {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut m.labels, &mut m.masks, &mut m.proposals].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if m.labels.is_none() && m.masks.is_none() && m.proposals.is_none() {
            bail!(
                "proposals manifest {} names no labels, masks or proposals",
                path.display()
            );
        }
        Ok(m)
    }

    /// Samples the canonical elements of `mesh` and gathers every proposal.
    pub fn resolve(&self, mesh: &TriMesh) -> Result<(PointSet, Vec<PartProposal>)> {
        let elements = sample_surface(mesh, self.points, self.seed)?;
        let mut proposals = Vec::new();
        if let Some(path) = &self.labels {
            let labels = LabelSet::load(path)?.to_elements(&elements, mesh.face_count())?;
            proposals.extend(ingest_labels(&labels, elements.len())?);
        }
        if let Some(path) = &self.masks {
            let entries = load_mask_manifest(path)?;
            proposals.extend(proposals_from_masks(mesh, &elements, &entries)?);
        }
        if let Some(path) = &self.proposals {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let file: ProposalFile =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            if (file.points, file.seed) != (self.points, self.seed) {
                bail!(
                    "{} was projected onto {} points with seed {}; the manifest asks for {} with seed {}",
                    path.display(),
                    file.points,
                    file.seed,
                    self.points,
                    self.seed
                );
            }
            proposals.extend(file.proposals);
        }
        Ok((elements, proposals))
    }
}
