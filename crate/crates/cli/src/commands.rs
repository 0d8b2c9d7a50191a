//! Subcommand implementations. Each is a pure function of its inputs; JSON
//! goes to the named file or to stdout.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use trifield_core::analysis::{
    best_of_scales, cosegment, evaluation_report, nn_correspondence, warn_if_not_normalized, EvaluationReport,
    ShapeEval,
};
use trifield_core::clustering::multi_scale;
use trifield_core::geometry::sample_surface;
use trifield_core::proposals::{load_mask_manifest, proposals_from_masks};
use trifield_core::{agglomerate, cut_tree, fit_field, miou, ClusterOptions, FitConfig, GroundTruth, Segmentation};

use crate::inputs::{load_face_features, load_normalized, ProposalFile, ProposalsManifest};

pub fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub struct FitArgs {
    pub mesh: PathBuf,
    pub proposals: PathBuf,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub report: Option<PathBuf>,
    pub iterations: Option<usize>,
    pub seed: Option<u64>,
    pub timing: bool,
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let (mesh, _) = load_normalized(&args.mesh)?;
    let manifest = ProposalsManifest::load(&args.proposals)?;
    let mut config: FitConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => FitConfig::default(),
    };
    if let Some(n) = args.iterations {
        config.iterations = n;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    let (elements, proposals) = manifest.resolve(&mesh)?;
    log::info!("{} proposals over {} elements", proposals.len(), elements.len());
    let (field, mut report) = fit_field(&elements.points, &proposals, &config)?;
    field
        .save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    if !args.timing {
        report.wall_clock_seconds = None;
    }
    if let Some(path) = &args.report {
        write_json(Some(path), &report)?;
    }
    Ok(())
}

pub enum Scales {
    K(usize),
    Sweep(usize),
}

pub fn segment(mesh: &Path, features: &Path, scales: Scales, out: Option<&Path>) -> Result<()> {
    let (mesh, _) = load_normalized(mesh)?;
    let feats = load_face_features(&mesh, features)?;
    let tree = agglomerate(&feats, mesh.face_adjacency(), &ClusterOptions::default())?;
    match scales {
        Scales::K(k) => write_json(out, &cut_tree(&tree, k)?),
        Scales::Sweep(n) => {
            if n == 0 {
                bail!("--scales must be at least 1");
            }
            let ks: Vec<usize> = (2..2 + n).collect();
            write_json(out, &multi_scale(&tree, &ks)?)
        }
    }
}

pub fn hierarchy(mesh: &Path, features: &Path, out: Option<&Path>) -> Result<()> {
    let (mesh, _) = load_normalized(mesh)?;
    let feats = load_face_features(&mesh, features)?;
    write_json(
        out,
        &agglomerate(&feats, mesh.face_adjacency(), &ClusterOptions::default())?,
    )
}

/// A single segmentation or a sweep over several cluster counts.
#[derive(Deserialize)]
#[serde(untagged)]
enum Prediction {
    One(Segmentation),
    Sweep(Vec<Segmentation>),
}

fn eval_one(shape_id: String, category: Option<String>, gt: &Path, pred: &Path) -> Result<ShapeEval> {
    let gt: GroundTruth = read_json(gt)?;
    let (best_k, report) = match read_json::<Prediction>(pred)? {
        Prediction::One(seg) => (None, miou(&gt.labels, &seg.labels)?),
        Prediction::Sweep(segs) => {
            let (i, r) = best_of_scales(&gt.labels, &segs)?;
            (Some(segs[i].k), r)
        }
    };
    Ok(ShapeEval {
        shape_id,
        category,
        best_k,
        report,
    })
}

/// Entry of an `eval --batch` list. Paths are relative to the list.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BatchEntry {
    shape_id: String,
    #[serde(default)]
    category: Option<String>,
    gt: PathBuf,
    pred: PathBuf,
}

pub fn eval(gt: &Path, pred: &Path, category: Option<String>, out: Option<&Path>) -> Result<()> {
    let id = gt
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let report: EvaluationReport = evaluation_report(vec![eval_one(id, category, gt, pred)?]);
    write_json(out, &report)
}

pub fn eval_batch(list: &Path, out: Option<&Path>) -> Result<()> {
    let entries: Vec<BatchEntry> = read_json(list)?;
    let base = list.parent().unwrap_or(Path::new("."));
    let shapes = entries
        .into_iter()
        .map(|e| eval_one(e.shape_id, e.category, &base.join(e.gt), &base.join(e.pred)))
        .collect::<Result<Vec<_>>>()?;
    write_json(out, &evaluation_report(shapes))
}

pub struct PairArgs {
    pub source_mesh: PathBuf,
    pub source_features: PathBuf,
    pub target_mesh: PathBuf,
    pub target_features: PathBuf,
}

fn load_pair(args: &PairArgs) -> Result<(trifield_core::FeatureSet, trifield_core::FeatureSet)> {
    let (src, _) = load_normalized(&args.source_mesh)?;
    let (tgt, _) = load_normalized(&args.target_mesh)?;
    warn_if_not_normalized(&src, &args.source_mesh.display().to_string());
    warn_if_not_normalized(&tgt, &args.target_mesh.display().to_string());
    Ok((
        load_face_features(&src, &args.source_features)?,
        load_face_features(&tgt, &args.target_features)?,
    ))
}

pub fn coseg(args: &PairArgs, source_seg: &Path, out: Option<&Path>) -> Result<()> {
    let (src, tgt) = load_pair(args)?;
    let seg: Segmentation = read_json(source_seg)?;
    let seg = Segmentation::with_ids(seg.labels)?;
    write_json(out, &cosegment(&seg, &src, &tgt)?)
}

#[derive(Serialize)]
struct Correspondence {
    /// Target face matched to each source face.
    target_face: Vec<u32>,
}

pub fn correspond(args: &PairArgs, out: Option<&Path>) -> Result<()> {
    let (src, tgt) = load_pair(args)?;
    write_json(
        out,
        &Correspondence {
            target_face: nn_correspondence(&src, &tgt)?,
        },
    )
}

pub fn project(mesh: &Path, masks: &Path, points: usize, seed: u64, out: Option<&Path>) -> Result<()> {
    let (mesh, _) = load_normalized(mesh)?;
    let elements = sample_surface(&mesh, points, seed)?;
    let entries = load_mask_manifest(masks)?;
    let proposals = proposals_from_masks(&mesh, &elements, &entries)?;
    write_json(
        out,
        &ProposalFile {
            points,
            seed,
            proposals,
        },
    )
}
