use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::Segmentation;
use crate::error::{Error, Result};
use crate::field::FeatureSet;

/// Cluster counts cut by default: 2 through 21.
pub const DEFAULT_SCALES: std::ops::RangeInclusive<usize> = 2..=21;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterOptions {
    /// Unit-normalize features before clustering.
    pub normalize: bool,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        ClusterOptions { normalize: true }
    }
}

/// Internal node `leaves + i` merges `left` and `right` (`left < right`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeNode {
    pub left: u32,
    pub right: u32,
    pub cost: f64,
    pub size: u32,
    #[serde(skip)]
    pub mean: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeTree {
    pub leaves: usize,
    pub nodes: Vec<MergeNode>,
}

impl MergeTree {
    pub fn root(&self) -> u32 {
        (self.leaves + self.nodes.len()).saturating_sub(1) as u32
    }
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    cost: f64,
    a: u32,
    b: u32,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then(self.a.cmp(&other.a))
            .then(self.b.cmp(&other.b))
    }
}

fn cosine_distance(x: &[f64], y: &[f64]) -> f64 {
    let (mut d, mut nx, mut ny) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        d += a * b;
        nx += a * a;
        ny += b * b;
    }
    let n = (nx * ny).sqrt();
    if n < 1e-24 {
        1.0
    } else {
        1.0 - d / n
    }
}

struct State {
    dim: usize,
    means: Vec<Vec<f64>>,
    sizes: Vec<u32>,
    neighbors: Vec<Vec<u32>>,
    active: Vec<bool>,
    parent: Vec<u32>,
}

impl State {
    fn find(&mut self, mut x: u32) -> u32 {
        let mut root = x;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        while self.parent[x as usize] != root {
            let next = self.parent[x as usize];
            self.parent[x as usize] = root;
            x = next;
        }
        root
    }

    fn cost(&self, a: u32, b: u32) -> f64 {
        cosine_distance(&self.means[a as usize], &self.means[b as usize])
    }

    fn merge(&mut self, a: u32, b: u32, cost: f64, nodes: &mut Vec<MergeNode>) -> u32 {
        let t = self.means.len() as u32;
        let (sa, sb) = (self.sizes[a as usize] as f64, self.sizes[b as usize] as f64);
        let mean: Vec<f64> = (0..self.dim)
            .map(|k| (self.means[a as usize][k] * sa + self.means[b as usize][k] * sb) / (sa + sb))
            .collect();
        let size = self.sizes[a as usize] + self.sizes[b as usize];
        self.active[a as usize] = false;
        self.active[b as usize] = false;
        self.parent[a as usize] = t;
        self.parent[b as usize] = t;
        self.parent.push(t);
        self.active.push(true);
        self.means.push(mean.clone());
        self.sizes.push(size);
        let mut nb = std::mem::take(&mut self.neighbors[a as usize]);
        nb.append(&mut std::mem::take(&mut self.neighbors[b as usize]));
        self.neighbors.push(Vec::new());
        let mut roots: Vec<u32> = nb.into_iter().map(|x| self.find(x)).filter(|&r| r != t).collect();
        roots.sort_unstable();
        roots.dedup();
        self.neighbors[t as usize] = roots;
        nodes.push(MergeNode {
            left: a.min(b),
            right: a.max(b),
            cost,
            size,
            mean,
        });
        t
    }
}

/// Greedy centroid-linkage clustering restricted to adjacent clusters.
/// Components left unconnected are joined last by their cheapest pair.
pub fn agglomerate(features: &FeatureSet, adjacency: &[Vec<u32>], options: &ClusterOptions) -> Result<MergeTree> {
    let n = features.len();
    if adjacency.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{n} feature rows, adjacency over {} faces",
            adjacency.len()
        )));
    }
    if n == 0 {
        return Err(Error::EmptyShape);
    }
    let dim = features.dim;
    let rows = if options.normalize {
        features.normalized()
    } else {
        features.to_f64()
    };
    let mut st = State {
        dim,
        means: rows.chunks(dim).map(<[f64]>::to_vec).collect(),
        sizes: vec![1; n],
        neighbors: adjacency.to_vec(),
        active: vec![true; n],
        parent: (0..n as u32).collect(),
    };
    let mut heap = BinaryHeap::new();
    for (i, nb) in adjacency.iter().enumerate() {
        for &j in nb {
            if (j as usize) >= n {
                return Err(Error::InvalidArgument(format!("adjacency references face {j}")));
            }
            if (i as u32) < j {
                heap.push(Reverse(Candidate {
                    cost: st.cost(i as u32, j),
                    a: i as u32,
                    b: j,
                }));
            }
        }
    }
    let mut nodes = Vec::with_capacity(n - 1);
    let mut remaining = n;
    while remaining > 1 {
        let Candidate { cost, a, b } = match heap.pop() {
            Some(Reverse(c)) => c,
            None => cheapest_unconstrained(&st),
        };
        if !st.active[a as usize] || !st.active[b as usize] {
            continue;
        }
        let t = st.merge(a, b, cost, &mut nodes);
        remaining -= 1;
        for &r in &st.neighbors[t as usize] {
            heap.push(Reverse(Candidate {
                cost: st.cost(r, t),
                a: r,
                b: t,
            }));
        }
    }
    Ok(MergeTree { leaves: n, nodes })
}

fn cheapest_unconstrained(st: &State) -> Candidate {
    let act: Vec<u32> = (0..st.active.len() as u32).filter(|&i| st.active[i as usize]).collect();
    let mut best: Option<Candidate> = None;
    for (x, &a) in act.iter().enumerate() {
        for &b in &act[x + 1..] {
            let c = Candidate {
                cost: st.cost(a, b),
                a,
                b,
            };
            if best.is_none_or(|bst| c < bst) {
                best = Some(c);
            }
        }
    }
    best.expect("at least two active clusters")
}

/// Flat segmentation with `k` clusters: the tree with its last `k - 1`
/// merges undone.
pub fn cut_tree(tree: &MergeTree, k: usize) -> Result<Segmentation> {
    let n = tree.leaves;
    if k == 0 || k > n {
        return Err(Error::KOutOfRange { k, max: n });
    }
    if tree.nodes.len() + 1 != n {
        return Err(Error::InvalidArgument(format!(
            "merge tree with {n} leaves has {} merges",
            tree.nodes.len()
        )));
    }
    let mut parent: Vec<u32> = (0..n as u32).collect();
    let mut rep: Vec<u32> = (0..n as u32).collect();
    fn find(parent: &mut [u32], mut x: u32) -> u32 {
        while parent[x as usize] != x {
            let p = parent[x as usize];
            parent[x as usize] = parent[p as usize];
            x = p;
        }
        x
    }
    for node in &tree.nodes[..n - k] {
        let a = find(&mut parent, rep[node.left as usize]);
        let b = find(&mut parent, rep[node.right as usize]);
        let r = a.min(b);
        parent[a.max(b) as usize] = r;
        rep.push(r);
    }
    let labels: Vec<u32> = (0..n as u32).map(|i| find(&mut parent, i)).collect();
    Ok(Segmentation::canonical(&labels))
}

pub fn multi_scale(tree: &MergeTree, ks: &[usize]) -> Result<Vec<Segmentation>> {
    ks.iter().map(|&k| cut_tree(tree, k)).collect()
}
