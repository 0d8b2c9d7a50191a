use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trifield_core::analysis::{
    best_of_scales, cosegment, evaluation_report, fit_logreg, nn_correspondence, partnete_group, predict,
    similarity_map, similarity_map_cross, transfer_to_faces, Annotation, ShapeEval, PARTNETE_GROUPS,
};
use trifield_core::geometry::fixtures::icosphere;
use trifield_core::{miou, ElementKind, Error, FeatureSet, Segmentation};

fn features(dim: usize, rows: &[Vec<f32>]) -> FeatureSet {
    FeatureSet::new(ElementKind::Face, dim, rows.concat()).unwrap()
}

/// Pairwise IoU over every (ground-truth part, predicted part) combination,
/// scanning all faces for each pair.
fn exhaustive_miou(gt: &[u32], pred: &[u32]) -> f64 {
    let gt_ids: BTreeSet<u32> = gt.iter().copied().collect();
    let pred_ids: BTreeSet<u32> = pred.iter().copied().collect();
    let mut sum = 0.0;
    for &g in &gt_ids {
        let mut best = 0.0f64;
        for &p in &pred_ids {
            let inter = gt.iter().zip(pred).filter(|&(&a, &b)| a == g && b == p).count();
            let union = gt.iter().zip(pred).filter(|&(&a, &b)| a == g || b == p).count();
            best = best.max(inter as f64 / union as f64);
        }
        sum += best;
    }
    sum / gt_ids.len() as f64
}

fn random_partition(n: usize, parts: u32, rng: &mut ChaCha8Rng) -> Vec<u32> {
    (0..n).map(|_| rng.random_range(0..parts) * 7 + 3).collect()
}

#[test]
fn miou_worked_example() {
    let gt = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
    let pred = [0, 0, 0, 0, 1, 1, 1, 1, 1, 1];
    let r = miou(&gt, &pred).unwrap();
    assert!((r.miou - 0.816_666_666_666_666_7).abs() < 1e-12);
    assert!((r.miou - 0.81667).abs() < 5e-6);
    assert_eq!(r.parts[0].iou, 0.8);
    assert!((r.parts[1].iou - 5.0 / 6.0).abs() < 1e-15);
}

#[test]
fn miou_equals_exhaustive_oracle_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let start = Instant::now();
    for _ in 0..1000 {
        let n = rng.random_range(1..=100);
        let gt = random_partition(n, rng.random_range(1..=8), &mut rng);
        let pred = random_partition(n, rng.random_range(1..=12), &mut rng);
        let got = miou(&gt, &pred).unwrap().miou;
        assert_eq!(got.to_bits(), exhaustive_miou(&gt, &pred).to_bits());
    }
    assert!(start.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn single_predicted_cluster_scores_by_part_fractions() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let a = rng.random_range(1..50);
        let b = rng.random_range(1..50);
        let gt: Vec<u32> = (0..a + b).map(|i| (i >= a) as u32).collect();
        let r = miou(&gt, &vec![0; a + b]).unwrap();
        assert!((r.miou - 0.5).abs() < 1e-12);
        assert_eq!(r.miou.to_bits(), exhaustive_miou(&gt, &vec![0; a + b]).to_bits());
    }
}

#[test]
fn miou_errors() {
    assert!(matches!(miou(&[0, 1], &[0]), Err(Error::ShapeMismatch(_))));
    assert!(miou(&[], &[]).is_err());
}

proptest! {
    #[test]
    fn miou_is_relabeling_invariant(seed in any::<u64>(), n in 1usize..80) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gt = random_partition(n, 4, &mut rng);
        let pred = random_partition(n, 5, &mut rng);
        let base = miou(&gt, &pred).unwrap().miou;
        let mut perm: Vec<u32> = (0..64).collect();
        perm.shuffle(&mut rng);
        let relabel = |v: &[u32]| v.iter().map(|&x| perm[x as usize] + 100).collect::<Vec<_>>();
        prop_assert!((miou(&relabel(&gt), &pred).unwrap().miou - base).abs() < 1e-12);
        prop_assert!((miou(&gt, &relabel(&pred)).unwrap().miou - base).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&base));
        let same = Segmentation::canonical(&gt) == Segmentation::canonical(&pred);
        prop_assert_eq!(base == 1.0, same);
        prop_assert_eq!(miou(&gt, &relabel(&gt)).unwrap().miou, 1.0);
    }
}

#[test]
fn best_of_scales_selection() {
    let gt = vec![0, 0, 1, 1, 2, 2];
    let exact = Segmentation::canonical(&gt);
    let coarse = Segmentation::canonical(&[0, 0, 0, 0, 1, 1]);
    let fine = Segmentation::canonical(&[0, 1, 2, 3, 4, 5]);
    let (i, r) = best_of_scales(&gt, &[coarse.clone(), exact.clone(), fine.clone()]).unwrap();
    assert_eq!((i, r.miou), (1, 1.0));
    assert_eq!(best_of_scales(&gt, &[fine.clone()]).unwrap().0, 0);
    assert!(best_of_scales(&gt, &[]).is_err());

    // Equal scores: the smaller k wins regardless of position.
    let gt2 = vec![0, 0, 0, 0];
    let k2 = Segmentation::canonical(&[0, 0, 1, 1]);
    let k2b = Segmentation::canonical(&[0, 1, 1, 1]);
    let k3 = Segmentation::canonical(&[0, 1, 1, 2]);
    assert_eq!(miou(&gt2, &k2.labels).unwrap().miou, 0.5);
    let k3_score = miou(&gt2, &k3.labels).unwrap().miou;
    assert_eq!(best_of_scales(&gt2, &[k3.clone(), k2b.clone()]).unwrap().0, 1);
    assert!(k3_score < 0.75);
    let twin_a = Segmentation::canonical(&[0, 0, 1, 2]);
    let twin_b = Segmentation::canonical(&[0, 0, 1, 1]);
    assert_eq!(
        miou(&gt2, &twin_a.labels).unwrap().miou,
        miou(&gt2, &twin_b.labels).unwrap().miou
    );
    assert_eq!(best_of_scales(&gt2, &[twin_a, twin_b]).unwrap().0, 1);
}

#[test]
fn similarity_map_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rows: Vec<Vec<f32>> = (0..200)
        .map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let f = features(6, &rows);
    for anchor in [0, 17, 199] {
        let map = similarity_map(&f, anchor).unwrap();
        assert!((map[anchor] - 1.0).abs() < 1e-12);
        let a: Vec<f64> = rows[anchor].iter().map(|&x| x as f64).collect();
        for (i, row) in rows.iter().enumerate() {
            let b: Vec<f64> = row.iter().map(|&x| x as f64).collect();
            let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((map[i] - dot / (na * nb)).abs() < 1e-12);
        }
    }
    let constant = features(3, &vec![vec![0.2, -0.5, 0.1]; 10]);
    assert!(similarity_map(&constant, 4)
        .unwrap()
        .iter()
        .all(|&v| (v - 1.0).abs() < 1e-12));

    let zero = features(2, &[vec![0.0, 0.0], vec![1.0, 0.0]]);
    assert!(matches!(similarity_map(&zero, 0), Err(Error::Degenerate(_))));
    assert!(similarity_map(&zero, 2).is_err());
    let other = features(3, &[vec![1.0, 0.0, 0.0]]);
    assert!(matches!(
        similarity_map_cross(&zero, 1, &other),
        Err(Error::ShapeMismatch(_))
    ));
    let cross = similarity_map_cross(&f, 3, &features(6, &[rows[3].clone(), rows[9].clone()])).unwrap();
    assert!((cross[0] - 1.0).abs() < 1e-12);
}

#[test]
fn nn_correspondence_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let dim = 5;
    let src: Vec<Vec<f32>> = (0..300)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let tgt: Vec<Vec<f32>> = (0..700)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let got = nn_correspondence(&features(dim, &src), &features(dim, &tgt)).unwrap();
    let cos = |a: &[f32], b: &[f32]| {
        let d: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
        let n = |v: &[f32]| v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        d / (n(a) * n(b))
    };
    for (i, s) in src.iter().enumerate() {
        let mut best = (f64::NEG_INFINITY, 0);
        for (j, t) in tgt.iter().enumerate() {
            let c = cos(s, t);
            if c > best.0 + 1e-12 {
                best = (c, j);
            }
        }
        assert_eq!(got[i] as usize, best.1);
    }
}

#[test]
fn nn_correspondence_identity_and_inverse_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let rows: Vec<Vec<f32>> = (0..500)
        .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let f = features(4, &rows);
    let id = nn_correspondence(&f, &f).unwrap();
    assert_eq!(id, (0..500).collect::<Vec<u32>>());

    let mut perm: Vec<usize> = (0..500).collect();
    perm.shuffle(&mut rng);
    let permuted: Vec<Vec<f32>> = perm.iter().map(|&p| rows[p].clone()).collect();
    let map = nn_correspondence(&f, &features(4, &permuted)).unwrap();
    for (j, &p) in perm.iter().enumerate() {
        assert_eq!(map[p] as usize, j);
    }

    // Duplicate target rows resolve to the lower index.
    let dup = features(4, &[rows[0].clone(), rows[0].clone()]);
    assert_eq!(nn_correspondence(&features(4, &rows[..1]), &dup).unwrap(), vec![0]);
    assert!(nn_correspondence(&f, &FeatureSet::new(ElementKind::Face, 4, vec![]).unwrap()).is_err());
}

fn blobs(rng: &mut ChaCha8Rng, centers: &[[f32; 3]], per: usize, spread: f32) -> (Vec<Vec<f32>>, Vec<u32>) {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..per * centers.len() {
        let c = i % centers.len();
        rows.push(
            centers[c]
                .iter()
                .map(|&x| x + rng.random_range(-spread..spread))
                .collect(),
        );
        labels.push(c as u32);
    }
    (rows, labels)
}

const CENTERS: [[f32; 3]; 3] = [[1.0, 0.0, 0.1], [0.0, 1.0, 0.1], [0.1, 0.0, 1.0]];

#[test]
fn cosegment_identity_and_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (rows, labels) = blobs(&mut rng, &CENTERS, 40, 0.1);
    let f = features(3, &rows);
    let seg = Segmentation::with_ids(labels).unwrap();
    let same = cosegment(&seg, &f, &f).unwrap();
    assert_eq!(same, seg);

    // A shuffled copy of the source receives the source ids.
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut rng);
    let target = features(3, &order.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>());
    let moved = cosegment(&seg, &f, &target).unwrap();
    for (j, &i) in order.iter().enumerate() {
        assert_eq!(moved.labels[j], seg.labels[i]);
    }
    let back = cosegment(&moved, &target, &f).unwrap();
    assert!(back.same_partition(&seg));
    assert!(cosegment(&seg, &f, &features(2, &[vec![1.0, 0.0]])).is_err());
}

#[test]
fn transfer_to_faces_uses_nearest_sample() {
    let mesh = icosphere(1.0, 1);
    let centroids: Vec<_> = (0..mesh.face_count()).map(|f| mesh.face_centroid(f)).collect();
    let labels: Vec<u32> = (0..mesh.face_count() as u32).map(|f| f % 3).collect();
    assert_eq!(transfer_to_faces(&mesh, &centroids, &labels).unwrap(), labels);
    assert!(transfer_to_faces(&mesh, &centroids, &labels[1..]).is_err());
}

/// Binary log-loss with an L2 penalty on the weights, evaluated directly.
fn objective(x: &[Vec<f64>], y: &[f64], w: &[f64], b: f64, lambda: f64) -> f64 {
    let mut total = 0.0;
    for (xi, &yi) in x.iter().zip(y) {
        let s = b + xi.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        let p = 1.0 / (1.0 + (-s).exp());
        total -= yi * p.ln() + (1.0 - yi) * (1.0 - p).ln();
    }
    total / x.len() as f64 + 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>()
}

fn gradient(x: &[Vec<f64>], y: &[f64], w: &[f64], b: f64, lambda: f64) -> (Vec<f64>, f64) {
    let n = x.len() as f64;
    let mut gw: Vec<f64> = w.iter().map(|v| lambda * v).collect();
    let mut gb = 0.0;
    for (xi, &yi) in x.iter().zip(y) {
        let s = b + xi.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        let r = (1.0 / (1.0 + (-s).exp()) - yi) / n;
        gb += r;
        gw.iter_mut().zip(xi).for_each(|(g, a)| *g += r * a);
    }
    (gw, gb)
}

/// Fixed-step descent with step 1 / L, L bounding the Hessian for unit rows.
fn slow_descent(x: &[Vec<f64>], y: &[f64], lambda: f64) -> f64 {
    let mut w = vec![0.0; x[0].len()];
    let mut b = 0.0;
    let step = 1.0 / (0.5 + lambda);
    for _ in 0..2_000_000 {
        let (gw, gb) = gradient(x, y, &w, b, lambda);
        if (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt() < 1e-10 {
            break;
        }
        w.iter_mut().zip(&gw).for_each(|(a, g)| *a -= step * g);
        b -= step * gb;
    }
    objective(x, y, &w, b, lambda)
}

#[test]
fn logreg_is_optimal_and_matches_slow_descent() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (rows, labels) = blobs(&mut rng, &CENTERS, 10, 0.6);
    let f = features(3, &rows);
    let annotations: Vec<Annotation> = labels
        .iter()
        .enumerate()
        .step_by(2)
        .map(|(i, &c)| Annotation {
            element: i as u32,
            class: c,
        })
        .collect();
    let lambda = 1e-2;
    let model = fit_logreg(&f, &annotations, lambda).unwrap();
    assert_eq!(model.classes, vec![0, 1, 2]);
    let unit: Vec<Vec<f64>> = f.normalized().chunks(3).map(<[f64]>::to_vec).collect();
    let x: Vec<Vec<f64>> = annotations.iter().map(|a| unit[a.element as usize].clone()).collect();
    for (c, &class) in model.classes.iter().enumerate() {
        let y: Vec<f64> = annotations.iter().map(|a| (a.class == class) as u8 as f64).collect();
        let (gw, gb) = gradient(&x, &y, &model.weights[c], model.bias[c], lambda);
        let norm = (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
        assert!(norm < 1e-6, "class {class}: gradient norm {norm:e}");
        let fitted = objective(&x, &y, &model.weights[c], model.bias[c], lambda);
        assert!((fitted - slow_descent(&x, &y, lambda)).abs() < 1e-6);
    }
}

#[test]
fn logreg_separable_annotations_are_reproduced() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (rows, labels) = blobs(&mut rng, &CENTERS[..2], 30, 0.1);
    let f = features(3, &rows);
    let annotations = [Annotation { element: 0, class: 5 }, Annotation { element: 1, class: 9 }];
    let model = fit_logreg(&f, &annotations, 1e-2).unwrap();
    let seg = predict(&model, &f).unwrap();
    assert_eq!(seg.k, 2);
    assert_eq!(seg.labels[0], 0);
    assert_eq!(seg.labels[1], 1);
    // The whole blob follows its annotated member.
    assert!(seg.labels.iter().zip(&labels).all(|(a, b)| a == b));
}

#[test]
fn logreg_heavy_penalty_predicts_priors() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (rows, _) = blobs(&mut rng, &CENTERS[..2], 10, 0.1);
    let f = features(3, &rows);
    let annotations: Vec<Annotation> = [(0, 0), (1, 1), (2, 0), (4, 0)]
        .iter()
        .map(|&(element, class)| Annotation { element, class })
        .collect();
    let model = fit_logreg(&f, &annotations, 1e6).unwrap();
    assert!(model.weights.iter().flatten().all(|w| w.abs() < 1e-5));
    let logit = |p: f64| (p / (1.0 - p)).ln();
    assert!((model.bias[0] - logit(0.75)).abs() < 1e-4);
    assert!((model.bias[1] - logit(0.25)).abs() < 1e-4);
    assert!(predict(&model, &f).unwrap().labels.iter().all(|&l| l == 0));
}

#[test]
fn logreg_rejects_bad_annotations() {
    let f = features(2, &[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
    let a = |element, class| Annotation { element, class };
    assert!(fit_logreg(&f, &[a(0, 0), a(1, 0)], 1e-2).is_err());
    assert!(fit_logreg(&f, &[a(0, 0), a(0, 1), a(1, 1)], 1e-2).is_err());
    assert!(fit_logreg(&f, &[a(0, 0), a(0, 0), a(1, 1)], 1e-2).is_ok());
    assert!(fit_logreg(&f, &[a(0, 0), a(7, 1)], 1e-2).is_err());
    assert!(fit_logreg(&f, &[a(0, 0), a(1, 1)], 0.0).is_err());
}

#[test]
fn partnete_groups_cover_each_category_once() {
    let mut seen = BTreeMap::new();
    for (group, members) in PARTNETE_GROUPS {
        for &m in members {
            assert!(seen.insert(m, group).is_none(), "{m} listed twice");
        }
    }
    assert_eq!(seen.len(), 44);
    for (m, g) in &seen {
        assert_eq!(partnete_group(m), Some(*g));
    }
    assert_eq!(partnete_group("Airplane"), None);
}

#[test]
fn evaluation_report_aggregates() {
    let shape = |id: &str, cat: &str, m: f64| ShapeEval {
        shape_id: id.into(),
        category: Some(cat.into()),
        best_k: None,
        report: trifield_core::MiouReport { miou: m, parts: vec![] },
    };
    let report = evaluation_report(vec![
        shape("a", "Chair", 0.5),
        shape("b", "Chair", 0.7),
        shape("c", "Table", 0.9),
        shape("d", "Oven", 0.4),
    ]);
    assert!((report.mean_miou - 0.625).abs() < 1e-12);
    assert!((report.category_means["Chair"] - 0.6).abs() < 1e-12);
    assert!((report.group_means["Furniture & Household Infrastructure"] - 0.75).abs() < 1e-12);
    assert!((report.group_means["Large Home Appliances"] - 0.4).abs() < 1e-12);
}
