use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use anyhow::{Context, Result};
use trifield_core::geometry::{load_mesh, write_obj};
use trifield_core::{agglomerate, ClusterOptions, FeatureSet, MergeTree, TriMesh};

use crate::inputs::FeatureSource;

/// Face features and merge tree of the current field, built before they
/// are swapped into a session.
pub struct Derived {
    pub features: FeatureSet,
    pub tree: MergeTree,
}

impl Derived {
    pub fn build(mesh: &TriMesh, source: &FeatureSource) -> Result<Derived> {
        let features = source.face_features(mesh)?;
        let tree = agglomerate(&features, mesh.face_adjacency(), &ClusterOptions::default())?;
        Ok(Derived { features, tree })
    }
}

#[derive(Default)]
pub struct SessionState {
    /// Raw PFLD or PFTS bytes of the current field, kept for persistence.
    pub source_bytes: Option<Arc<Vec<u8>>>,
    pub derived: Option<Arc<Derived>>,
    /// Annotated face -> class.
    pub annotations: BTreeMap<u32, u32>,
}

pub struct Session {
    pub id: String,
    /// Normalized to the unit cube.
    pub mesh: TriMesh,
    pub state: RwLock<SessionState>,
}

impl Session {
    pub fn derived(&self) -> Option<Arc<Derived>> {
        self.state.read().unwrap().derived.clone()
    }

    pub fn annotations(&self) -> BTreeMap<u32, u32> {
        self.state.read().unwrap().annotations.clone()
    }

    /// Replaces the field and its derived data in one step.
    pub fn swap_field(&self, bytes: Vec<u8>, derived: Derived) {
        let mut st = self.state.write().unwrap();
        st.source_bytes = Some(Arc::new(bytes));
        st.derived = Some(Arc::new(derived));
    }
}

/// Directory layout: `<root>/<shape id>/{mesh.obj, field.bin, annotations.json}`.
#[derive(Clone)]
pub struct Store {
    root: Option<PathBuf>,
}

const MESH_FILE: &str = "mesh.obj";
const FIELD_FILE: &str = "field.bin";
const ANNOTATIONS_FILE: &str = "annotations.json";

impl Store {
    pub fn new(root: Option<PathBuf>) -> Store {
        Store { root }
    }

    fn dir(&self, id: &str) -> Option<PathBuf> {
        self.root.as_ref().map(|r| r.join(id))
    }

    pub fn save_mesh(&self, id: &str, mesh: &TriMesh) -> Result<()> {
        if let Some(dir) = self.dir(id) {
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            write_obj(mesh, dir.join(MESH_FILE))?;
        }
        Ok(())
    }

    pub fn save_field(&self, id: &str, bytes: &[u8]) -> Result<()> {
        if let Some(dir) = self.dir(id) {
            write_atomic(&dir.join(FIELD_FILE), bytes)?;
        }
        Ok(())
    }

    pub fn save_annotations(&self, id: &str, annotations: &BTreeMap<u32, u32>) -> Result<()> {
        if let Some(dir) = self.dir(id) {
            write_atomic(
                &dir.join(ANNOTATIONS_FILE),
                serde_json::to_string(annotations)?.as_bytes(),
            )?;
        }
        Ok(())
    }

    /// Sessions found under the root, sorted by id.
    pub fn load_all(&self) -> Result<Vec<Session>> {
        let Some(root) = &self.root else { return Ok(Vec::new()) };
        if !root.exists() {
            std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
            return Ok(Vec::new());
        }
        let mut ids: Vec<String> = std::fs::read_dir(root)
            .with_context(|| format!("listing {}", root.display()))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().join(MESH_FILE).is_file())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        ids.sort();
        ids.iter().map(|id| load_session(&root.join(id), id)).collect()
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

fn load_session(dir: &Path, id: &str) -> Result<Session> {
    let mesh = load_mesh(dir.join(MESH_FILE))?;
    let mut state = SessionState::default();
    let field = dir.join(FIELD_FILE);
    if field.is_file() {
        let bytes = std::fs::read(&field).with_context(|| format!("reading {}", field.display()))?;
        let source = FeatureSource::from_bytes(&bytes)?;
        state.derived = Some(Arc::new(Derived::build(&mesh, &source)?));
        state.source_bytes = Some(Arc::new(bytes));
    }
    let ann = dir.join(ANNOTATIONS_FILE);
    if ann.is_file() {
        let text = std::fs::read_to_string(&ann).with_context(|| format!("reading {}", ann.display()))?;
        state.annotations = serde_json::from_str(&text)?;
    }
    Ok(Session {
        id: id.to_string(),
        mesh,
        state: RwLock::new(state),
    })
}
