use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use trifield_core::clustering::{multi_scale, DEFAULT_SCALES};
use trifield_core::field::DEFAULT_SAMPLES_PER_FACE;
use trifield_core::geometry::fixtures::dumbbell;
use trifield_core::geometry::sample_surface;
use trifield_core::loss::loss_grad;
use trifield_core::proposals::ingest_labels;
use trifield_core::sampler::{build_triplet_batch, ProposalPool, SamplerConfig, UnitFeatures};
use trifield_core::{agglomerate, ClusterOptions, LabelSet, TriplaneField};

fn field_query(c: &mut Criterion) {
    let fx = dumbbell(4);
    let points = sample_surface(&fx.mesh, 4096, 0).unwrap();
    let field = TriplaneField::new_triplane(128, 64, 0.01, 0).unwrap();
    let mut group = c.benchmark_group("field");
    group.bench_function("query_4096_points", |b| {
        b.iter(|| field.query_f64(black_box(&points.points)))
    });
    group.bench_function("face_features", |b| {
        b.iter(|| {
            field
                .face_features(black_box(&fx.mesh), DEFAULT_SAMPLES_PER_FACE, 0)
                .unwrap()
        })
    });
    group.finish();
}

fn training_step(c: &mut Criterion) {
    let fx = dumbbell(4);
    let points = sample_surface(&fx.mesh, 4096, 0).unwrap();
    let labels = points.face_labels_to_points(&fx.face_labels).unwrap();
    let proposals = ingest_labels(&LabelSet::single(labels), points.len()).unwrap();
    let pool = ProposalPool::new(&proposals).unwrap();
    let field = TriplaneField::new_triplane(64, 32, 0.01, 0).unwrap();
    let unit = UnitFeatures::from_rows(field.query_f64(&points.points), field.channels);
    let config = SamplerConfig::default();

    let mut group = c.benchmark_group("training_step");
    group.sample_size(20);
    let mut seed = 0u64;
    group.bench_function("sample_batch", |b| {
        b.iter(|| {
            seed += 1;
            build_triplet_batch(&pool, &config, &points.points, Some(&unit), seed).unwrap()
        })
    });
    group.bench_function("loss_grad", |b| {
        b.iter_batched(
            || build_triplet_batch(&pool, &config, &points.points, Some(&unit), 7).unwrap(),
            |batch| loss_grad(&batch, &field, &points.points).unwrap(),
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

fn clustering(c: &mut Criterion) {
    let fx = dumbbell(12);
    let field = TriplaneField::new_triplane(64, 32, 0.01, 1).unwrap();
    let feats = field.face_features(&fx.mesh, DEFAULT_SAMPLES_PER_FACE, 0).unwrap();
    let options = ClusterOptions::default();
    let ks: Vec<usize> = DEFAULT_SCALES.collect();
    let mut group = c.benchmark_group("clustering");
    group.sample_size(10);
    group.bench_function(format!("agglomerate_{}_faces", fx.mesh.face_count()), |b| {
        b.iter(|| agglomerate(black_box(&feats), fx.mesh.face_adjacency(), &options).unwrap())
    });
    let tree = agglomerate(&feats, fx.mesh.face_adjacency(), &options).unwrap();
    group.bench_function("twenty_cuts", |b| {
        b.iter(|| multi_scale(black_box(&tree), &ks).unwrap())
    });
    group.finish();
}

criterion_group!(benches, field_query, training_step, clustering);
criterion_main!(benches);
