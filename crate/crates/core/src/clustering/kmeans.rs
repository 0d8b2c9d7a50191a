use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Segmentation;
use crate::error::{Error, Result};
use crate::field::FeatureSet;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KmeansInit {
    /// `k` distinct rows chosen at random.
    Random { seed: u64 },
    /// Initial centroids, one per cluster (normalized before use).
    Seeded(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct KmeansResult {
    /// Cluster index per element; with seeded init, index into the seeds.
    pub assignments: Vec<u32>,
    /// Unit-normalized centroids.
    pub centroids: Vec<Vec<f64>>,
    /// Centroid updates performed.
    pub iterations: usize,
    pub converged: bool,
    /// Within-cluster sum of squares after each assignment step.
    pub objective: Vec<f64>,
}

impl KmeansResult {
    pub fn segmentation(&self) -> Segmentation {
        Segmentation::canonical(&self.assignments)
    }
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 1e-12 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Lloyd iterations on unit-normalized rows under squared Euclidean
/// distance. Centroids are plain cluster means; an emptied cluster takes the
/// point farthest from its centroid.
pub fn kmeans(features: &FeatureSet, k: usize, init: &KmeansInit, max_iters: usize) -> Result<KmeansResult> {
    let dim = features.dim;
    let rows = features.normalized();
    let n = features.len();
    let row = |i: usize| &rows[i * dim..(i + 1) * dim];
    if k == 0 {
        return Err(Error::KOutOfRange { k, max: n });
    }
    let mut centroids: Vec<Vec<f64>> = match init {
        KmeansInit::Seeded(seeds) => {
            if seeds.len() != k {
                return Err(Error::ShapeMismatch(format!("{} seeds for k = {k}", seeds.len())));
            }
            if let Some(s) = seeds.iter().find(|s| s.len() != dim) {
                return Err(Error::ShapeMismatch(format!(
                    "seed of dim {}, features of dim {dim}",
                    s.len()
                )));
            }
            if n == 0 {
                return Err(Error::EmptyShape);
            }
            seeds
                .iter()
                .map(|s| {
                    let mut s = s.clone();
                    normalize(&mut s);
                    s
                })
                .collect()
        }
        KmeansInit::Random { seed } => {
            if k > n {
                return Err(Error::KOutOfRange { k, max: n });
            }
            let distinct = distinct_rows(&rows, dim);
            if distinct.len() < k {
                return Err(Error::TooFewDistinct {
                    distinct: distinct.len(),
                    k,
                });
            }
            let mut pick = distinct;
            pick.shuffle(&mut rng::seeded(*seed));
            pick[..k].iter().map(|&i| row(i).to_vec()).collect()
        }
    };

    let mut assign = vec![u32::MAX; n];
    let mut objective = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let mut changed = false;
        let mut sse = 0.0;
        for i in 0..n {
            let (best, d) = centroids
                .iter()
                .enumerate()
                .map(|(c, m)| (c, sq_dist(row(i), m)))
                .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            sse += d;
            if assign[i] != best as u32 {
                assign[i] = best as u32;
                changed = true;
            }
        }
        objective.push(sse);
        if !changed {
            converged = true;
            break;
        }
        if iterations == max_iters {
            break;
        }
        update_means(&rows, dim, &mut assign, &mut centroids);
        iterations += 1;
    }
    for c in &mut centroids {
        normalize(c);
    }
    Ok(KmeansResult {
        assignments: assign,
        centroids,
        iterations,
        converged,
        objective,
    })
}

fn update_means(rows: &[f64], dim: usize, assign: &mut [u32], centroids: &mut [Vec<f64>]) {
    let k = centroids.len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (i, &a) in assign.iter().enumerate() {
        counts[a as usize] += 1;
        sums[a as usize]
            .iter_mut()
            .zip(&rows[i * dim..(i + 1) * dim])
            .for_each(|(s, x)| *s += x);
    }
    for c in 0..k {
        if counts[c] > 0 {
            centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        // Farthest point among clusters that can spare one.
        let far = (0..assign.len())
            .filter(|&i| counts[assign[i] as usize] > 1)
            .map(|i| {
                (
                    i,
                    sq_dist(&rows[i * dim..(i + 1) * dim], &centroids[assign[i] as usize]),
                )
            })
            .fold(None, |acc: Option<(usize, f64)>, x| match acc {
                Some(a) if a.1 >= x.1 => Some(a),
                _ => Some(x),
            });
        if let Some((i, _)) = far {
            counts[assign[i] as usize] -= 1;
            assign[i] = c as u32;
            counts[c] = 1;
            centroids[c] = rows[i * dim..(i + 1) * dim].to_vec();
        }
    }
}

fn distinct_rows(rows: &[f64], dim: usize) -> Vec<usize> {
    let mut seen = std::collections::HashSet::new();
    (0..rows.len() / dim.max(1))
        .filter(|&i| {
            seen.insert(
                rows[i * dim..(i + 1) * dim]
                    .iter()
                    .map(|x| x.to_bits())
                    .collect::<Vec<_>>(),
            )
        })
        .collect()
}
