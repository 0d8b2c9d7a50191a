use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::clustering::Segmentation;
use crate::error::{Error, Result};

/// Per-face instance part ids. JSON: `{"labels": [int per face]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub labels: Vec<u32>,
}

impl GroundTruth {
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<GroundTruth> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartIou {
    pub part: u32,
    pub size: usize,
    pub iou: f64,
    /// Predicted label achieving the best IoU (lowest on ties).
    pub matched: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiouReport {
    pub miou: f64,
    pub parts: Vec<PartIou>,
}

/// For every ground-truth part, the best IoU against any predicted part;
/// averaged over parts in increasing id order.
pub fn miou(gt: &[u32], pred: &[u32]) -> Result<MiouReport> {
    if gt.len() != pred.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} ground-truth labels, {} predicted",
            gt.len(),
            pred.len()
        )));
    }
    if gt.is_empty() {
        return Err(Error::EmptyShape);
    }
    let mut gt_size: BTreeMap<u32, usize> = BTreeMap::new();
    let mut pred_size: BTreeMap<u32, usize> = BTreeMap::new();
    let mut inter: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    for (&g, &p) in gt.iter().zip(pred) {
        *gt_size.entry(g).or_default() += 1;
        *pred_size.entry(p).or_default() += 1;
        *inter.entry((g, p)).or_default() += 1;
    }
    let mut parts = Vec::with_capacity(gt_size.len());
    for (&g, &gs) in &gt_size {
        let mut best = (0.0f64, u32::MAX);
        for (&(_, p), &i) in inter.range((g, 0)..=(g, u32::MAX)) {
            let union = gs + pred_size[&p] - i;
            let iou = i as f64 / union as f64;
            if iou > best.0 || best.1 == u32::MAX {
                best = (iou, p);
            }
        }
        parts.push(PartIou {
            part: g,
            size: gs,
            iou: best.0,
            matched: best.1,
        });
    }
    let sum: f64 = parts.iter().map(|p| p.iou).sum();
    Ok(MiouReport {
        miou: sum / parts.len() as f64,
        parts,
    })
}

/// Index and report of the best segmentation; ties go to the smaller `k`.
pub fn best_of_scales(gt: &[u32], segs: &[Segmentation]) -> Result<(usize, MiouReport)> {
    if segs.is_empty() {
        return Err(Error::InvalidArgument("no segmentations to choose from".into()));
    }
    let mut best: Option<(usize, MiouReport)> = None;
    for (i, s) in segs.iter().enumerate() {
        let r = miou(gt, &s.labels)?;
        let better = match &best {
            None => true,
            Some((j, b)) => r.miou > b.miou || (r.miou == b.miou && s.k < segs[*j].k),
        };
        if better {
            best = Some((i, r));
        }
    }
    Ok(best.unwrap())
}
