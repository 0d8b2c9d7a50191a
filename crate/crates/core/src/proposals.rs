//! Part proposals: subsets of a shape's canonical elements asserted to form
//! one part, from 3D label sets or from 2D masks projected through a camera.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{render_depth_ids, Bvh, Camera, DepthIdImage, KdTree, PointSet, TriMesh};

/// Mask proposals with fewer members than this are dropped.
pub const MIN_MASK_PROPOSAL: usize = 20;
/// A label needs this many visible pixels in a view to emit a synthetic mask.
pub const MIN_SYNTH_MASK_PIXELS: usize = 50;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProposalSource {
    Label3d { level: u32, label: u32 },
    Mask2d { view: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartProposal {
    #[serde(default)]
    pub shape_id: String,
    pub source: ProposalSource,
    /// Sorted canonical element ids.
    pub members: Vec<u32>,
    /// Sorted ids visible in the mask's view; `None` means every element.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visible: Option<Vec<u32>>,
    pub element_count: u32,
}

impl PartProposal {
    /// Elements negatives may be drawn from: the visible (or full) set minus
    /// the members.
    pub fn negative_domain(&self) -> Vec<u32> {
        let mut out = Vec::new();
        let mut m = self.members.iter().peekable();
        let mut push_if_absent = |e: u32| {
            while m.peek().is_some_and(|&&x| x < e) {
                m.next();
            }
            if m.peek() != Some(&&e) {
                out.push(e);
            }
        };
        match &self.visible {
            Some(v) => v.iter().for_each(|&e| push_if_absent(e)),
            None => (0..self.element_count).for_each(&mut push_if_absent),
        }
        out
    }

    /// True when the proposal cannot yield a triplet: fewer than two members
    /// or an empty complement.
    pub fn is_degenerate(&self) -> bool {
        let domain = self.visible.as_ref().map_or(self.element_count as usize, Vec::len);
        self.members.len() < 2 || self.members.len() >= domain
    }
}

/// One level of integer labels over all elements (or faces).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelLevel {
    #[serde(default)]
    pub name: String,
    pub labels: Vec<u32>,
}

/// Integer labels at one or more hierarchy levels. File format:
/// `{"levels": [{"name": str, "labels": [int, ...]}]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelSet {
    pub levels: Vec<LabelLevel>,
}

impl LabelSet {
    pub fn single(labels: Vec<u32>) -> LabelSet {
        LabelSet {
            levels: vec![LabelLevel {
                name: "level0".into(),
                labels,
            }],
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<LabelSet> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Re-indexes face labels onto the elements' source faces. Levels already
    /// sized to the element count are kept as-is.
    pub fn to_elements(&self, elements: &PointSet, face_count: usize) -> Result<LabelSet> {
        let levels = self
            .levels
            .iter()
            .map(|lvl| {
                let labels = if lvl.labels.len() == elements.len() {
                    lvl.labels.clone()
                } else if lvl.labels.len() == face_count {
                    elements.face_labels_to_points(&lvl.labels)?
                } else {
                    return Err(Error::MissingLabels(format!(
                        "level {:?} has {} labels; expected {} elements or {} faces",
                        lvl.name,
                        lvl.labels.len(),
                        elements.len(),
                        face_count
                    )));
                };
                Ok(LabelLevel {
                    name: lvl.name.clone(),
                    labels,
                })
            })
            .collect::<Result<_>>()?;
        Ok(LabelSet { levels })
    }
}

/// One proposal per (level, label id). Proposals of one level partition the
/// elements; a level with a single label yields a degenerate whole-shape
/// proposal.
pub fn ingest_labels(labels: &LabelSet, element_count: usize) -> Result<Vec<PartProposal>> {
    if labels.levels.is_empty() {
        return Err(Error::MissingLabels("label set has no levels".into()));
    }
    let mut out = Vec::new();
    for (li, lvl) in labels.levels.iter().enumerate() {
        if lvl.labels.is_empty() {
            return Err(Error::MissingLabels(format!("level {li} is empty")));
        }
        if lvl.labels.len() != element_count {
            return Err(Error::MissingLabels(format!(
                "level {li} labels {} of {element_count} elements",
                lvl.labels.len()
            )));
        }
        let n_labels = *lvl.labels.iter().max().unwrap() as usize + 1;
        let mut groups: Vec<Vec<u32>> = vec![Vec::new(); n_labels];
        for (e, &l) in lvl.labels.iter().enumerate() {
            groups[l as usize].push(e as u32);
        }
        if let Some(missing) = groups.iter().position(Vec::is_empty) {
            return Err(Error::InvalidArgument(format!(
                "level {li} label ids are not dense: id {missing} unused"
            )));
        }
        for (label, members) in groups.into_iter().enumerate() {
            let p = PartProposal {
                shape_id: String::new(),
                source: ProposalSource::Label3d {
                    level: li as u32,
                    label: label as u32,
                },
                members,
                visible: None,
                element_count: element_count as u32,
            };
            if p.is_degenerate() {
                log::warn!("level {li} label {label} covers the whole shape (empty complement)");
            }
            out.push(p);
        }
    }
    Ok(out)
}

/// Binary image; `true` = masked.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    pub rows: u32,
    pub cols: u32,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn from_fn(rows: u32, cols: u32, f: impl Fn(u32, u32) -> bool) -> Mask {
        let mut data = Vec::with_capacity((rows * cols) as usize);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Mask { rows, cols, data }
    }

    /// Loads a binary PGM (P5) or PNG; nonzero pixels are masked.
    pub fn load(path: impl AsRef<Path>) -> Result<Mask> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.starts_with(b"P5") {
            parse_pgm(&bytes)
        } else {
            let img = image::load_from_memory(&bytes)
                .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?
                .into_luma8();
            Ok(Mask {
                rows: img.height(),
                cols: img.width(),
                data: img.pixels().map(|p| p.0[0] != 0).collect(),
            })
        }
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = format!("P5\n{} {}\n255\n", self.cols, self.rows).into_bytes();
        out.extend(self.data.iter().map(|&m| if m { 255u8 } else { 0 }));
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn parse_pgm(bytes: &[u8]) -> Result<Mask> {
    // Header: magic, width, height, maxval separated by whitespace/comments.
    let mut fields = Vec::new();
    let mut i = 2;
    while fields.len() < 3 {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b'#') {
            if bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if start == i {
            return Err(Error::Header("malformed PGM header".into()));
        }
        let v: usize = std::str::from_utf8(&bytes[start..i]).unwrap().parse().unwrap();
        fields.push(v);
    }
    i += 1;
    let (cols, rows, maxval) = (fields[0], fields[1], fields[2]);
    let bpp = if maxval < 256 { 1 } else { 2 };
    let need = rows * cols * bpp;
    let body = bytes.get(i..i + need).ok_or(Error::Truncated {
        expected: i + need,
        actual: bytes.len(),
    })?;
    let data = body.chunks(bpp).map(|c| c.iter().any(|&b| b != 0)).collect();
    Ok(Mask {
        rows: rows as u32,
        cols: cols as u32,
        data,
    })
}

/// Pixel-to-element matching radius: twice the median nearest-neighbor
/// spacing of the canonical elements.
pub fn match_radius(elements: &PointSet) -> f64 {
    2.0 * KdTree::new(&elements.points).median_nn_spacing()
}

/// Association of canonical elements with the hit pixels of one view. Each
/// element is matched to its nearest unprojected hit pixel if that lies
/// within the matching radius.
#[derive(Clone, Debug)]
pub struct ViewMatch {
    pub view: u32,
    pub rows: u32,
    pub cols: u32,
    /// Matched pixel (row-major index) per element.
    pub pixel_of: Vec<Option<u32>>,
}

impl ViewMatch {
    pub fn new(view: u32, image: &DepthIdImage, camera: &Camera, elements: &PointSet, radius: f64) -> ViewMatch {
        let unprojected = image.unproject(camera);
        let mut pixel_of = vec![None; elements.len()];
        if !unprojected.is_empty() {
            let pts: Vec<_> = unprojected.iter().map(|&(_, p)| p).collect();
            let tree = KdTree::new(&pts);
            let r2 = radius * radius;
            for (e, p) in elements.points.iter().enumerate() {
                if let Some((i, d2)) = tree.nearest(*p) {
                    if d2 <= r2 {
                        pixel_of[e] = Some(unprojected[i].0 as u32);
                    }
                }
            }
        }
        ViewMatch {
            view,
            rows: image.rows,
            cols: image.cols,
            pixel_of,
        }
    }

    pub fn visible(&self) -> Vec<u32> {
        (0..self.pixel_of.len() as u32)
            .filter(|&e| self.pixel_of[e as usize].is_some())
            .collect()
    }

    pub fn project(&self, mask: &Mask, image: &DepthIdImage) -> Result<PartProposal> {
        if mask.rows != self.rows || mask.cols != self.cols {
            return Err(Error::ShapeMismatch(format!(
                "mask is {}x{} but view is {}x{}",
                mask.rows, mask.cols, self.rows, self.cols
            )));
        }
        let masked_hits = mask
            .data
            .iter()
            .zip(&image.pixels)
            .filter(|(m, p)| **m && p.is_some())
            .count();
        if masked_hits == 0 {
            return Err(Error::EmptyMask);
        }
        let members = (0..self.pixel_of.len() as u32)
            .filter(|&e| self.pixel_of[e as usize].is_some_and(|px| mask.data[px as usize]))
            .collect();
        Ok(PartProposal {
            shape_id: String::new(),
            source: ProposalSource::Mask2d { view: self.view },
            members,
            visible: Some(self.visible()),
            element_count: self.pixel_of.len() as u32,
        })
    }
}

/// Projects a 2D mask onto the canonical elements seen in `view`.
pub fn project_mask(
    mask: &Mask,
    view: &DepthIdImage,
    camera: &Camera,
    elements: &PointSet,
    view_id: u32,
) -> Result<PartProposal> {
    let matched = ViewMatch::new(view_id, view, camera, elements, match_radius(elements));
    matched.project(mask, view)
}

/// Renders per-face labels from each camera and emits one mask proposal per
/// label with at least [`MIN_SYNTH_MASK_PIXELS`] visible pixels.
pub fn synth_mask_proposals(
    mesh: &TriMesh,
    face_labels: &[u32],
    cameras: &[Camera],
    elements: &PointSet,
) -> Result<Vec<PartProposal>> {
    if face_labels.len() != mesh.face_count() {
        return Err(Error::MissingLabels(format!(
            "{} face labels for {} faces",
            face_labels.len(),
            mesh.face_count()
        )));
    }
    let n_labels = face_labels.iter().max().map_or(0, |&m| m as usize + 1);
    let bvh = Bvh::build(mesh);
    let radius = match_radius(elements);
    let mut out = Vec::new();
    for (vi, cam) in cameras.iter().enumerate() {
        cam.validate()?;
        let image = crate::geometry::camera_render(&bvh, cam);
        let matched = ViewMatch::new(vi as u32, &image, cam, elements, radius);
        let pixel_label: Vec<Option<u32>> = image
            .pixels
            .iter()
            .map(|p| p.map(|h| face_labels[h.face as usize]))
            .collect();
        for label in 0..n_labels as u32 {
            let count = pixel_label.iter().filter(|&&l| l == Some(label)).count();
            if count < MIN_SYNTH_MASK_PIXELS {
                continue;
            }
            let mask = Mask {
                rows: cam.rows,
                cols: cam.cols,
                data: pixel_label.iter().map(|&l| l == Some(label)).collect(),
            };
            let p = matched.project(&mask, &image)?;
            if p.members.len() >= MIN_MASK_PROPOSAL {
                out.push(p);
            }
        }
    }
    Ok(out)
}

/// Entry of a mask manifest: `[{"mask": path, "camera": {...}}, ...]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaskEntry {
    pub mask: PathBuf,
    pub camera: Camera,
}

pub fn load_mask_manifest(path: impl AsRef<Path>) -> Result<Vec<MaskEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries: Vec<MaskEntry> = serde_json::from_str(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    for e in &mut entries {
        if e.mask.is_relative() {
            e.mask = base.join(&e.mask);
        }
    }
    Ok(entries)
}

/// Projects every manifest mask. Entries sharing an identical camera share
/// one view id and one rendering. Proposals below [`MIN_MASK_PROPOSAL`]
/// members are dropped.
pub fn proposals_from_masks(mesh: &TriMesh, elements: &PointSet, entries: &[MaskEntry]) -> Result<Vec<PartProposal>> {
    let bvh = Bvh::build(mesh);
    let radius = match_radius(elements);
    let mut views: Vec<(Camera, DepthIdImage, ViewMatch)> = Vec::new();
    let mut out = Vec::new();
    for entry in entries {
        entry.camera.validate()?;
        let vi = match views.iter().position(|(c, _, _)| *c == entry.camera) {
            Some(i) => i,
            None => {
                let image = crate::geometry::camera_render(&bvh, &entry.camera);
                let m = ViewMatch::new(views.len() as u32, &image, &entry.camera, elements, radius);
                views.push((entry.camera.clone(), image, m));
                views.len() - 1
            }
        };
        let mask = Mask::load(&entry.mask)?;
        let (_, image, matched) = &views[vi];
        let p = matched.project(&mask, image)?;
        if p.members.len() >= MIN_MASK_PROPOSAL {
            out.push(p);
        }
    }
    Ok(out)
}

/// Convenience: renders one view.
pub fn render_view(mesh: &TriMesh, camera: &Camera) -> Result<DepthIdImage> {
    render_depth_ids(mesh, camera)
}
