//! Flat and hierarchical decompositions of face features.

mod agglomerative;
mod kmeans;

pub use agglomerative::{agglomerate, cut_tree, multi_scale, ClusterOptions, MergeNode, MergeTree, DEFAULT_SCALES};
pub use kmeans::{kmeans, KmeansInit, KmeansResult};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-element cluster labels, dense in `[0, k)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segmentation {
    pub k: usize,
    pub labels: Vec<u32>,
}

impl Segmentation {
    /// Relabels by first occurrence so equal partitions compare equal.
    pub fn canonical(labels: &[u32]) -> Segmentation {
        let mut map = std::collections::HashMap::new();
        let labels: Vec<u32> = labels
            .iter()
            .map(|&l| {
                let next = map.len() as u32;
                *map.entry(l).or_insert(next)
            })
            .collect();
        Segmentation { k: map.len(), labels }
    }

    /// Keeps ids as given; they must be dense in `[0, k)`.
    pub fn with_ids(labels: Vec<u32>) -> Result<Segmentation> {
        let k = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
        let mut seen = vec![false; k];
        labels.iter().for_each(|&l| seen[l as usize] = true);
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidArgument("segmentation labels are not dense".into()));
        }
        Ok(Segmentation { k, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Member lists per label.
    pub fn groups(&self) -> Vec<Vec<u32>> {
        let mut g = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            g[l as usize].push(i as u32);
        }
        g
    }

    pub fn same_partition(&self, other: &Segmentation) -> bool {
        Segmentation::canonical(&self.labels) == Segmentation::canonical(&other.labels)
    }
}
