use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use trifield_core::geometry::fixtures::dumbbell;
use trifield_core::geometry::sample_surface;
use trifield_core::proposals::{ingest_labels, PartProposal, ProposalSource};
use trifield_core::sampler::{
    build_triplet_batch, sample_3d_hard_negatives, sample_feature_hard_negatives, sample_positive_pairs,
    sample_uniform_negatives, Bandwidth, ProposalPool, SamplerConfig, UnitFeatures,
};
use trifield_core::{DVec3, LabelSet};

fn proposal(members: Vec<u32>, n: u32) -> PartProposal {
    PartProposal {
        shape_id: "s".into(),
        source: ProposalSource::Label3d { level: 0, label: 0 },
        members,
        visible: None,
        element_count: n,
    }
}

/// Chi-square goodness of fit; returns the p-value.
fn chi_square_p(counts: &[usize], probs: &[f64]) -> f64 {
    let n: usize = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = p * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

fn histogram(draws: &[u32], domain: &[u32]) -> Vec<usize> {
    let index: HashMap<u32, usize> = domain.iter().enumerate().map(|(i, &d)| (d, i)).collect();
    let mut h = vec![0; domain.len()];
    draws.iter().for_each(|d| h[index[d]] += 1);
    h
}

#[test]
fn uniform_negatives_are_uniform_over_the_complement() {
    let p = proposal((0..20).collect(), 60);
    let domain = p.negative_domain();
    let draws = sample_uniform_negatives(&p, 40_000, 7).unwrap();
    let probs = vec![1.0 / 40.0; 40];
    assert!(chi_square_p(&histogram(&draws, &domain), &probs) > 1e-3);
}

#[test]
fn positive_pairs_are_uniform_over_ordered_distinct_pairs() {
    let p = proposal(vec![2, 5, 8, 11, 14, 17], 20);
    let pairs = sample_positive_pairs(&p, 30_000, 3).unwrap();
    assert!(pairs.iter().all(|(a, b)| a != b));
    let mut counts: HashMap<(u32, u32), usize> = HashMap::new();
    pairs.iter().for_each(|&ab| *counts.entry(ab).or_default() += 1);
    assert_eq!(counts.len(), 30);
    let c: Vec<usize> = counts.values().copied().collect();
    assert!(chi_square_p(&c, &vec![1.0 / 30.0; 30]) > 1e-3);
}

#[test]
fn euclidean_hard_negatives_follow_distance_softmax() {
    let positions: Vec<DVec3> = (0..30).map(|i| DVec3::new(i as f64 * 0.05, 0.0, 0.0)).collect();
    let p = proposal((0..5).collect(), 30);
    let domain = p.negative_domain();
    let dist: Vec<f64> = domain.iter().map(|&c| positions[c as usize].x).collect();
    let mut sorted = dist.clone();
    sorted.sort_by(f64::total_cmp);
    let sigma = sorted[sorted.len() / 2];
    let w: Vec<f64> = dist.iter().map(|d| (-d / sigma).exp()).collect();
    let z: f64 = w.iter().sum();
    let probs: Vec<f64> = w.iter().map(|x| x / z).collect();
    let draws = sample_3d_hard_negatives(0, &p, &positions, 50_000, Bandwidth::MedianDistance, 5).unwrap();
    assert!(chi_square_p(&histogram(&draws, &domain), &probs) > 1e-3);

    let fixed = sample_3d_hard_negatives(0, &p, &positions, 50_000, Bandwidth::Fixed(0.2), 6).unwrap();
    let w: Vec<f64> = dist.iter().map(|d| (-d / 0.2).exp()).collect();
    let z: f64 = w.iter().sum();
    let probs: Vec<f64> = w.iter().map(|x| x / z).collect();
    assert!(chi_square_p(&histogram(&fixed, &domain), &probs) > 1e-3);
}

#[test]
fn feature_hard_negatives_follow_cosine_softmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rows: Vec<f64> = (0..25 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let feats = UnitFeatures::from_rows(rows, 3);
    let p = proposal(vec![0, 1, 2], 25);
    let domain = p.negative_domain();
    let cos: Vec<f64> = domain
        .iter()
        .map(|&c| feats.row(0).iter().zip(feats.row(c as usize)).map(|(a, b)| a * b).sum())
        .collect();
    let w: Vec<f64> = cos.iter().map(|c| (c / 0.5).exp()).collect();
    let z: f64 = w.iter().sum();
    let probs: Vec<f64> = w.iter().map(|x| x / z).collect();
    let draws = sample_feature_hard_negatives(0, &p, &feats, 50_000, 0.5, 2).unwrap();
    assert!(chi_square_p(&histogram(&draws, &domain), &probs) > 1e-3);
}

#[test]
fn hard_negatives_are_harder_than_uniform() {
    let fx = dumbbell(4);
    let pts = sample_surface(&fx.mesh, 2048, 0).unwrap();
    let labels = pts.face_labels_to_points(&fx.face_labels).unwrap();
    let props = ingest_labels(&LabelSet::single(labels), pts.len()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    // Feature angle proportional to x, so feature-hard should pick nearby points.
    let rows: Vec<f64> = pts
        .points
        .iter()
        .flat_map(|p| [(2.0 * p.x).cos(), (2.0 * p.x).sin()])
        .collect();
    let feats = UnitFeatures::from_rows(rows, 2);
    let (mut closer, mut more_similar) = (0, 0);
    for trial in 0..100u64 {
        let prop = &props[rng.random_range(0..props.len())];
        let anchor = prop.members[rng.random_range(0..prop.members.len())];
        let a = pts.points[anchor as usize];
        let mean_dist = |d: &[u32]| d.iter().map(|&c| pts.points[c as usize].distance(a)).sum::<f64>() / d.len() as f64;
        let mean_cos = |d: &[u32]| {
            d.iter()
                .map(|&c| {
                    feats
                        .row(anchor as usize)
                        .iter()
                        .zip(feats.row(c as usize))
                        .map(|(x, y)| x * y)
                        .sum::<f64>()
                })
                .sum::<f64>()
                / d.len() as f64
        };
        let uni = sample_uniform_negatives(prop, 256, trial).unwrap();
        let hard = sample_3d_hard_negatives(anchor, prop, &pts.points, 256, Bandwidth::MedianDistance, trial).unwrap();
        let fh = sample_feature_hard_negatives(anchor, prop, &feats, 256, 0.5, trial).unwrap();
        closer += (mean_dist(&hard) < mean_dist(&uni)) as usize;
        more_similar += (mean_cos(&fh) > mean_cos(&uni)) as usize;
    }
    assert!(closer >= 95, "{closer}");
    assert!(more_similar >= 95, "{more_similar}");
}

#[test]
fn batches_are_deterministic_and_well_formed() {
    let fx = dumbbell(2);
    let pts = sample_surface(&fx.mesh, 1024, 0).unwrap();
    let labels = pts.face_labels_to_points(&fx.face_labels).unwrap();
    let props = ingest_labels(&LabelSet::single(labels), pts.len()).unwrap();
    let pool = ProposalPool::new(&props).unwrap();
    let feats = UnitFeatures::from_rows(pts.points.iter().flat_map(|p| [p.x, p.y, p.z]).collect(), 3);
    let cfg = SamplerConfig {
        masks_per_batch: 4,
        positive_pairs: 16,
        uniform_negatives: 8,
        hard3d_negatives: 8,
        feature_hard_negatives: 8,
        ..Default::default()
    };
    let a = build_triplet_batch(&pool, &cfg, &pts.points, Some(&feats), 11).unwrap();
    let b = build_triplet_batch(&pool, &cfg, &pts.points, Some(&feats), 11).unwrap();
    let c = build_triplet_batch(&pool, &cfg, &pts.points, Some(&feats), 12).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.len(), 64);
    assert_eq!(a.negatives.len(), 64 * 24);
    assert!(!a.feature_hard_skipped);
    for (i, pair) in a.pairs.iter().enumerate() {
        let members = pool.members(pair.proposal as usize);
        assert_ne!(pair.anchor, pair.positive);
        assert!(members.binary_search(&pair.anchor).is_ok());
        assert!(members.binary_search(&pair.positive).is_ok());
        assert!(a.negatives_of(i).iter().all(|c| members.binary_search(c).is_err()));
    }
}

#[test]
fn mask_negatives_stay_in_the_visible_set() {
    let mut p = proposal(vec![1, 2, 3], 100);
    p.visible = Some(vec![1, 2, 3, 10, 20, 30]);
    let draws = sample_uniform_negatives(&p, 1000, 0).unwrap();
    assert!(draws.iter().all(|d| [10, 20, 30].contains(d)));
}
