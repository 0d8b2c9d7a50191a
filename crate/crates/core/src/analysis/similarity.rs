use crate::clustering::{kmeans, KmeansInit, Segmentation};
use crate::error::{Error, Result};
use crate::field::FeatureSet;
use crate::geometry::{KdTree, TriMesh};
use crate::loss::DEGENERATE_NORM;

const COSEG_MAX_ITERS: usize = 100;

fn unit_row(f: &FeatureSet, i: usize) -> Option<Vec<f64>> {
    let r: Vec<f64> = f.row(i).iter().map(|&x| x as f64).collect();
    let n = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n >= DEGENERATE_NORM).then(|| r.iter().map(|x| x / n).collect())
}

/// Cosine of every element's feature to the anchor's.
pub fn similarity_map(features: &FeatureSet, anchor: usize) -> Result<Vec<f64>> {
    similarity_map_cross(features, anchor, features)
}

/// Cosine of every `target` element to element `anchor` of `source`.
pub fn similarity_map_cross(source: &FeatureSet, anchor: usize, target: &FeatureSet) -> Result<Vec<f64>> {
    if anchor >= source.len() {
        return Err(Error::InvalidArgument(format!(
            "anchor {anchor} out of range ({})",
            source.len()
        )));
    }
    if source.dim != target.dim {
        return Err(Error::ShapeMismatch(format!(
            "feature dims {} and {}",
            source.dim, target.dim
        )));
    }
    let a = unit_row(source, anchor).ok_or_else(|| Error::Degenerate(format!("anchor {anchor} has a zero feature")))?;
    Ok((0..target.len())
        .map(|i| match unit_row(target, i) {
            Some(u) => u.iter().zip(&a).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0),
            None => 0.0,
        })
        .collect())
}

/// For each source element, the target element of highest cosine (lowest
/// index on ties).
pub fn nn_correspondence(source: &FeatureSet, target: &FeatureSet) -> Result<Vec<u32>> {
    if target.is_empty() {
        return Err(Error::InvalidArgument("empty target feature set".into()));
    }
    if source.dim != target.dim {
        return Err(Error::ShapeMismatch(format!(
            "feature dims {} and {}",
            source.dim, target.dim
        )));
    }
    let d = source.dim;
    let s = source.normalized();
    let t = target.normalized();
    Ok(s.chunks(d)
        .map(|u| {
            let mut best = (f64::NEG_INFINITY, 0u32);
            for (j, v) in t.chunks(d).enumerate() {
                let c: f64 = u.iter().zip(v).map(|(x, y)| x * y).sum();
                if c > best.0 {
                    best = (c, j as u32);
                }
            }
            best.1
        })
        .collect())
}

/// Segments `target` by k-means seeded with the source per-part mean
/// (unit-normalized) features. Labels are the source part ids.
pub fn cosegment(source_seg: &Segmentation, source: &FeatureSet, target: &FeatureSet) -> Result<Segmentation> {
    if source.dim != target.dim {
        return Err(Error::ShapeMismatch(format!(
            "feature dims {} and {}",
            source.dim, target.dim
        )));
    }
    if source_seg.len() != source.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {} source elements",
            source_seg.len(),
            source.len()
        )));
    }
    let d = source.dim;
    let rows = source.normalized();
    let mut means = vec![vec![0.0; d]; source_seg.k];
    let mut counts = vec![0usize; source_seg.k];
    for (i, &l) in source_seg.labels.iter().enumerate() {
        counts[l as usize] += 1;
        means[l as usize]
            .iter_mut()
            .zip(&rows[i * d..(i + 1) * d])
            .for_each(|(m, x)| *m += x);
    }
    for (m, &c) in means.iter_mut().zip(&counts) {
        m.iter_mut().for_each(|x| *x /= c.max(1) as f64);
    }
    let r = kmeans(target, source_seg.k, &KmeansInit::Seeded(means), COSEG_MAX_ITERS)?;
    Ok(Segmentation {
        k: source_seg.k,
        labels: r.assignments,
    })
}

/// Face labels from labels on sample points: each face takes the label of
/// the sample nearest its centroid.
pub fn transfer_to_faces(mesh: &TriMesh, points: &[glam::DVec3], labels: &[u32]) -> Result<Vec<u32>> {
    if points.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} points, {} labels",
            points.len(),
            labels.len()
        )));
    }
    if points.is_empty() {
        return Err(Error::EmptyShape);
    }
    let tree = KdTree::new(points);
    Ok((0..mesh.face_count())
        .map(|f| labels[tree.nearest(mesh.face_centroid(f)).expect("nonempty tree").0])
        .collect())
}

/// Warns when a mesh used across shapes is not inside the unit cube with a
/// longest side of 2.
pub fn warn_if_not_normalized(mesh: &TriMesh, name: &str) -> bool {
    let b = mesh.bounds();
    let ext = b.extent();
    let longest = ext.x.max(ext.y).max(ext.z);
    let ok = b.min.min_element() >= -1.0 - 1e-9 && b.max.max_element() <= 1.0 + 1e-9 && (longest - 2.0).abs() < 1e-6;
    if !ok {
        log::warn!("{name}: mesh is not normalized to the unit cube; cross-shape results assume shared normalization and orientation");
    }
    ok
}
