//! Triplet sampling: uniform positive pairs and uniform, Euclidean-hard and
//! feature-hard negatives drawn from a proposal's complement.
//!
//! Hard negatives are drawn with probability proportional to
//! `exp(-d / sigma)` (Euclidean distance to the anchor, `sigma` the median
//! anchor-to-domain distance) or `exp(cos / tau_m)` (feature cosine to the
//! anchor). All draws are with replacement.

use glam::DVec3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FeatureSet;
use crate::kernels::dot;
use crate::proposals::PartProposal;
use crate::rng::{self, derive};

/// Bandwidth of the Euclidean-hard weighting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// Median distance from the anchor to the negative domain.
    MedianDistance,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub masks_per_batch: usize,
    pub positive_pairs: usize,
    pub uniform_negatives: usize,
    pub hard3d_negatives: usize,
    pub feature_hard_negatives: usize,
    pub hard3d_bandwidth: Bandwidth,
    pub feature_temperature: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            masks_per_batch: 8,
            positive_pairs: 64,
            uniform_negatives: 256,
            hard3d_negatives: 256,
            feature_hard_negatives: 256,
            hard3d_bandwidth: Bandwidth::MedianDistance,
            feature_temperature: 0.5,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.positive_pairs == 0 {
            return Err(Error::InvalidArgument("positive_pairs must be at least 1".into()));
        }
        if self.masks_per_batch == 0 {
            return Err(Error::InvalidArgument("masks_per_batch must be at least 1".into()));
        }
        if self.negatives_per_pair() == 0 {
            return Err(Error::InvalidArgument(
                "at least one negative strategy needs a nonzero count".into(),
            ));
        }
        if !(self.feature_temperature > 0.0) {
            return Err(Error::InvalidArgument("feature_temperature must be positive".into()));
        }
        if let Bandwidth::Fixed(s) = self.hard3d_bandwidth {
            if !(s > 0.0) {
                return Err(Error::InvalidArgument("fixed bandwidth must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn negatives_per_pair(&self) -> usize {
        self.uniform_negatives + self.hard3d_negatives + self.feature_hard_negatives
    }

    pub fn uniform_only(&self) -> SamplerConfig {
        SamplerConfig {
            uniform_negatives: self.negatives_per_pair(),
            hard3d_negatives: 0,
            feature_hard_negatives: 0,
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletPair {
    pub anchor: u32,
    pub positive: u32,
    /// Index of the proposal in the pool the pair was drawn from.
    pub proposal: u32,
}

/// Per-pair negative counts; every pair carries `uniform + hard3d +
/// feature_hard` negatives laid out in that order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativeCounts {
    pub uniform: usize,
    pub hard3d: usize,
    pub feature_hard: usize,
}

impl NegativeCounts {
    pub fn total(&self) -> usize {
        self.uniform + self.hard3d + self.feature_hard
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripletBatch {
    pub pairs: Vec<TripletPair>,
    pub negatives: Vec<u32>,
    pub counts: NegativeCounts,
    /// Set when feature-hard negatives were requested but no features were
    /// available, so none were drawn.
    pub feature_hard_skipped: bool,
}

impl TripletBatch {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn negatives_of(&self, pair: usize) -> &[u32] {
        let n = self.counts.total();
        &self.negatives[pair * n..(pair + 1) * n]
    }

    /// Pairs duplicated `times` times, preserving order per copy.
    pub fn repeated(&self, times: usize) -> TripletBatch {
        let mut out = self.clone();
        for _ in 1..times {
            out.pairs.extend_from_slice(&self.pairs);
            out.negatives.extend_from_slice(&self.negatives);
        }
        out
    }
}

/// Unit-normalized features, row per element.
#[derive(Clone, Debug)]
pub struct UnitFeatures {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl UnitFeatures {
    pub fn from_feature_set(f: &FeatureSet) -> UnitFeatures {
        let mut data: Vec<f64> = f.data.iter().map(|&x| x as f64).collect();
        normalize_rows(&mut data, f.dim);
        UnitFeatures { dim: f.dim, data }
    }

    pub fn from_rows(mut data: Vec<f64>, dim: usize) -> UnitFeatures {
        normalize_rows(&mut data, dim);
        UnitFeatures { dim, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

fn normalize_rows(data: &mut [f64], dim: usize) {
    for row in data.chunks_mut(dim.max(1)) {
        let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            row.iter_mut().for_each(|x| *x /= n);
        } else {
            row.iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

/// Proposals prepared for sampling: degenerate ones removed, negative
/// domains precomputed.
#[derive(Clone, Debug)]
pub struct ProposalPool {
    entries: Vec<PoolEntry>,
}

#[derive(Clone, Debug)]
struct PoolEntry {
    members: Vec<u32>,
    domain: Vec<u32>,
}

impl ProposalPool {
    pub fn new(proposals: &[PartProposal]) -> Result<ProposalPool> {
        let entries: Vec<PoolEntry> = proposals
            .iter()
            .filter(|p| !p.is_degenerate())
            .map(|p| PoolEntry {
                members: p.members.clone(),
                domain: p.negative_domain(),
            })
            .filter(|e| e.members.len() >= 2 && !e.domain.is_empty())
            .collect();
        if entries.is_empty() {
            return Err(Error::NoValidProposal);
        }
        Ok(ProposalPool { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn members(&self, i: usize) -> &[u32] {
        &self.entries[i].members
    }

    pub fn domain(&self, i: usize) -> &[u32] {
        &self.entries[i].domain
    }
}

fn positive_pairs_from(members: &[u32], n: usize, rng: &mut impl Rng) -> Vec<(u32, u32)> {
    let m = members.len();
    (0..n)
        .map(|_| {
            let a = rng.random_range(0..m);
            let mut b = rng.random_range(0..m - 1);
            if b >= a {
                b += 1;
            }
            (members[a], members[b])
        })
        .collect()
}

fn uniform_from(domain: &[u32], m: usize, rng: &mut impl Rng, out: &mut Vec<u32>) {
    out.extend((0..m).map(|_| domain[rng.random_range(0..domain.len())]));
}

/// `m` draws from the unnormalized log-weights (softmax sampling).
fn softmax_draws(domain: &[u32], logits: &mut [f64], m: usize, rng: &mut impl Rng, out: &mut Vec<u32>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut acc = 0.0;
    for l in logits.iter_mut() {
        acc += (*l - max).exp();
        *l = acc;
    }
    for _ in 0..m {
        let u = rng.random::<f64>() * acc;
        let i = logits.partition_point(|&c| c <= u).min(domain.len() - 1);
        out.push(domain[i]);
    }
}

/// Median of `dist`; falls back to the largest distance when the median is
/// zero, and to 1 when every distance is zero.
fn median_bandwidth(dist: &[f64]) -> f64 {
    let mut d = dist.to_vec();
    let mid = d.len() / 2;
    let med = *d.select_nth_unstable_by(mid, f64::total_cmp).1;
    if med > 0.0 {
        med
    } else {
        let max = dist.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            max
        } else {
            1.0
        }
    }
}

fn hard3d_from(
    anchor: DVec3,
    domain: &[u32],
    positions: &[DVec3],
    m: usize,
    bandwidth: Bandwidth,
    rng: &mut impl Rng,
    scratch: &mut Vec<f64>,
    out: &mut Vec<u32>,
) {
    scratch.clear();
    scratch.extend(domain.iter().map(|&c| positions[c as usize].distance(anchor)));
    let sigma = match bandwidth {
        Bandwidth::MedianDistance => median_bandwidth(scratch),
        Bandwidth::Fixed(s) => s,
    };
    scratch.iter_mut().for_each(|d| *d = -*d / sigma);
    softmax_draws(domain, scratch, m, rng, out);
}

fn feature_hard_from(
    anchor: u32,
    domain: &[u32],
    features: &UnitFeatures,
    m: usize,
    tau: f64,
    rng: &mut impl Rng,
    scratch: &mut Vec<f64>,
    out: &mut Vec<u32>,
) {
    let fa = features.row(anchor as usize);
    scratch.clear();
    scratch.extend(domain.iter().map(|&c| dot(fa, features.row(c as usize)) / tau));
    softmax_draws(domain, scratch, m, rng, out);
}

pub fn sample_positive_pairs(proposal: &PartProposal, n: usize, seed: u64) -> Result<Vec<(u32, u32)>> {
    if proposal.members.len() < 2 {
        return Err(Error::SingletonProposal);
    }
    Ok(positive_pairs_from(&proposal.members, n, &mut rng::seeded(seed)))
}

pub fn sample_uniform_negatives(proposal: &PartProposal, m: usize, seed: u64) -> Result<Vec<u32>> {
    let domain = proposal.negative_domain();
    if domain.is_empty() {
        return Err(Error::EmptyComplement);
    }
    let mut out = Vec::with_capacity(m);
    uniform_from(&domain, m, &mut rng::seeded(seed), &mut out);
    Ok(out)
}

pub fn sample_3d_hard_negatives(
    anchor: u32,
    proposal: &PartProposal,
    positions: &[DVec3],
    m: usize,
    bandwidth: Bandwidth,
    seed: u64,
) -> Result<Vec<u32>> {
    let domain = proposal.negative_domain();
    if domain.is_empty() {
        return Err(Error::EmptyComplement);
    }
    let mut out = Vec::with_capacity(m);
    hard3d_from(
        positions[anchor as usize],
        &domain,
        positions,
        m,
        bandwidth,
        &mut rng::seeded(seed),
        &mut Vec::new(),
        &mut out,
    );
    Ok(out)
}

pub fn sample_feature_hard_negatives(
    anchor: u32,
    proposal: &PartProposal,
    features: &UnitFeatures,
    m: usize,
    tau: f64,
    seed: u64,
) -> Result<Vec<u32>> {
    let domain = proposal.negative_domain();
    if domain.is_empty() {
        return Err(Error::EmptyComplement);
    }
    let mut out = Vec::with_capacity(m);
    feature_hard_from(
        anchor,
        &domain,
        features,
        m,
        tau,
        &mut rng::seeded(seed),
        &mut Vec::new(),
        &mut out,
    );
    Ok(out)
}

/// Draws `masks_per_batch` proposals uniformly (with replacement), then per
/// proposal `positive_pairs` pairs, each with its own negatives. When
/// `features` is `None` no feature-hard negatives are drawn.
pub fn build_triplet_batch(
    pool: &ProposalPool,
    config: &SamplerConfig,
    positions: &[DVec3],
    features: Option<&UnitFeatures>,
    seed: u64,
) -> Result<TripletBatch> {
    config.validate()?;
    if pool.is_empty() {
        return Err(Error::NoValidProposal);
    }
    let feature_hard = match features {
        Some(_) => config.feature_hard_negatives,
        None => 0,
    };
    let skipped = features.is_none() && config.feature_hard_negatives > 0;
    if skipped {
        log::warn!("no features supplied; drawing 0 feature-hard negatives");
    }
    let counts = NegativeCounts {
        uniform: config.uniform_negatives,
        hard3d: config.hard3d_negatives,
        feature_hard,
    };
    if counts.total() == 0 {
        return Err(Error::InvalidArgument("no negatives requested".into()));
    }
    let seed = derive(config.seed, seed);
    let mut pick = rng::seeded(derive(seed, 0));
    let chosen: Vec<usize> = (0..config.masks_per_batch)
        .map(|_| pick.random_range(0..pool.len()))
        .collect();

    let n_pairs = config.masks_per_batch * config.positive_pairs;
    let mut pairs = Vec::with_capacity(n_pairs);
    let mut negatives = Vec::with_capacity(n_pairs * counts.total());
    let mut scratch = Vec::new();
    for (slot, &pi) in chosen.iter().enumerate() {
        let mut rng = rng::seeded(derive(seed, slot as u64 + 1));
        let members = pool.members(pi);
        let domain = pool.domain(pi);
        for (a, b) in positive_pairs_from(members, config.positive_pairs, &mut rng) {
            pairs.push(TripletPair {
                anchor: a,
                positive: b,
                proposal: pi as u32,
            });
            uniform_from(domain, counts.uniform, &mut rng, &mut negatives);
            if counts.hard3d > 0 {
                hard3d_from(
                    positions[a as usize],
                    domain,
                    positions,
                    counts.hard3d,
                    config.hard3d_bandwidth,
                    &mut rng,
                    &mut scratch,
                    &mut negatives,
                );
            }
            if let (Some(f), true) = (features, counts.feature_hard > 0) {
                feature_hard_from(
                    a,
                    domain,
                    f,
                    counts.feature_hard,
                    config.feature_temperature,
                    &mut rng,
                    &mut scratch,
                    &mut negatives,
                );
            }
        }
    }
    Ok(TripletBatch {
        pairs,
        negatives,
        counts,
        feature_hard_skipped: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proposals::ProposalSource;

    fn proposal(members: Vec<u32>, n: u32) -> PartProposal {
        PartProposal {
            shape_id: String::new(),
            source: ProposalSource::Label3d { level: 0, label: 0 },
            members,
            visible: None,
            element_count: n,
        }
    }

    #[test]
    fn size_two_proposal_gives_the_pair() {
        let p = proposal(vec![3, 7], 10);
        let pairs = sample_positive_pairs(&p, 1, 5).unwrap();
        let (a, b) = pairs[0];
        assert_eq!((a.min(b), a.max(b)), (3, 7));
        assert_eq!(sample_positive_pairs(&p, 64, 5).unwrap().len(), 64);
        assert!(matches!(
            sample_positive_pairs(&proposal(vec![1], 10), 1, 0),
            Err(Error::SingletonProposal)
        ));
    }

    #[test]
    fn uniform_negatives_avoid_members() {
        let p = proposal((0..50).collect(), 100);
        let neg = sample_uniform_negatives(&p, 256, 1).unwrap();
        assert_eq!(neg.len(), 256);
        assert!(neg.iter().all(|&c| c >= 50));
        let single = proposal((0..9).collect(), 10);
        assert_eq!(sample_uniform_negatives(&single, 5, 0).unwrap(), vec![9; 5]);
        assert!(matches!(
            sample_uniform_negatives(&proposal((0..4).collect(), 4), 1, 0),
            Err(Error::EmptyComplement)
        ));
    }

    #[test]
    fn equidistant_candidates_are_uniform_weighted() {
        let mut logits = vec![-1.0; 4];
        let domain = [0u32, 1, 2, 3];
        let mut rng = rng::seeded(0);
        let mut out = Vec::new();
        softmax_draws(&domain, &mut logits, 40_000, &mut rng, &mut out);
        for c in 0..4 {
            let f = out.iter().filter(|&&x| x == c).count() as f64 / 40_000.0;
            assert!((f - 0.25).abs() < 0.01, "{f}");
        }
    }

    #[test]
    fn missing_features_disable_feature_hard() {
        let pool = ProposalPool::new(&[proposal((0..10).collect(), 30)]).unwrap();
        let positions: Vec<DVec3> = (0..30).map(|i| DVec3::new(i as f64, 0.0, 0.0)).collect();
        let cfg = SamplerConfig {
            masks_per_batch: 1,
            ..Default::default()
        };
        let b = build_triplet_batch(&pool, &cfg, &positions, None, 0).unwrap();
        assert!(b.feature_hard_skipped);
        assert_eq!(b.counts.total(), 512);
        assert_eq!(b.len(), 64);
    }

    #[test]
    fn degenerate_only_pool_is_rejected() {
        assert!(matches!(
            ProposalPool::new(&[proposal((0..5).collect(), 5)]),
            Err(Error::NoValidProposal)
        ));
    }
}
