use std::ops::ControlFlow;

use trifield_core::fit::fit_field_with;
use trifield_core::geometry::fixtures::dumbbell;
use trifield_core::geometry::{sample_surface, PointSet};
use trifield_core::proposals::ingest_labels;
use trifield_core::sampler::SamplerConfig;
use trifield_core::{fit_field, Error, FitConfig, LabelSet, PartProposal};

fn setup() -> (PointSet, Vec<PartProposal>) {
    let fx = dumbbell(2);
    let pts = sample_surface(&fx.mesh, 1024, 3).unwrap();
    let labels = pts.face_labels_to_points(&fx.face_labels).unwrap();
    let props = ingest_labels(&LabelSet::single(labels), pts.len()).unwrap();
    (pts, props)
}

fn small_config(iterations: usize) -> FitConfig {
    FitConfig {
        iterations,
        resolution: 16,
        channels: 8,
        snapshot_every: 10,
        feature_hard_start: 20,
        sampler: SamplerConfig {
            masks_per_batch: 2,
            positive_pairs: 16,
            uniform_negatives: 16,
            hard3d_negatives: 16,
            feature_hard_negatives: 16,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn zero_iterations_returns_initial_field() {
    let (pts, props) = setup();
    let cfg = small_config(0);
    let (field, report) = fit_field(&pts.points, &props, &cfg).unwrap();
    let (again, _) = fit_field(&pts.points, &props, &cfg).unwrap();
    assert_eq!(field, again);
    assert_eq!((field.resolution, field.channels), (16, 8));
    assert!((field.temperature() - 0.07).abs() < 1e-6);
    assert_eq!(report.iterations, 0);
    assert!(report.initial_loss.is_none() && report.snapshots.is_empty());
}

#[test]
fn fit_is_deterministic_and_reduces_loss() {
    let (pts, props) = setup();
    let cfg = small_config(60);
    let (a, ra) = fit_field(&pts.points, &props, &cfg).unwrap();
    let (b, rb) = fit_field(&pts.points, &props, &cfg).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
    assert_eq!(ra.snapshots, rb.snapshots);
    assert_eq!(ra.iterations, 60);
    assert_eq!(ra.snapshots.len(), 6);
    assert_eq!(ra.proposals_used, 3);
    assert_eq!(ra.rejected_steps, 0);
    let first = ra.snapshots.first().unwrap().loss;
    let last = ra.snapshots.last().unwrap().loss;
    assert!(last < first, "{first} -> {last}");
    assert!(ra.final_loss.unwrap() < ra.initial_loss.unwrap());

    let other = FitConfig { seed: 1, ..cfg };
    let (c, _) = fit_field(&pts.points, &props, &other).unwrap();
    assert_ne!(a.to_bytes(), c.to_bytes());
}

#[test]
fn observer_can_stop_early() {
    let (pts, props) = setup();
    let mut seen = Vec::new();
    let (_, report) = fit_field_with(&pts.points, &props, &small_config(100), |p| {
        seen.push(p.iteration);
        if p.iteration >= 30 {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })
    .unwrap();
    assert_eq!(seen, vec![10, 20, 30]);
    assert_eq!(report.iterations, 30);
}

#[test]
fn mismatched_proposals_are_rejected() {
    let (pts, props) = setup();
    let r = fit_field(&pts.points[..100], &props, &small_config(5));
    assert!(matches!(r, Err(Error::ShapeMismatch(_))));
    let r = fit_field(
        &pts.points,
        &props,
        &FitConfig {
            learning_rate: 0.0,
            ..small_config(5)
        },
    );
    assert!(matches!(r, Err(Error::InvalidArgument(_))));
}

#[test]
fn temperature_stays_in_range() {
    let (pts, props) = setup();
    let cfg = FitConfig {
        learning_rate: 0.5,
        ..small_config(40)
    };
    let (field, report) = fit_field(&pts.points, &props, &cfg).unwrap();
    let t = field.temperature();
    assert!((0.01..=1.0).contains(&t), "{t}");
    assert!(report.snapshots.iter().all(|s| (0.01..=1.0).contains(&s.temperature)));
}
