use glam::DVec3;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

use super::{Bvh, PointSet, TriMesh};

/// Uniform point in a triangle from two uniforms (square-root warp).
pub(crate) fn triangle_point(tri: &[DVec3; 3], r1: f64, r2: f64) -> (DVec3, [f64; 3]) {
    let s = r1.sqrt();
    let b = [1.0 - s, s * (1.0 - r2), s * r2];
    (b[0] * tri[0] + b[1] * tri[1] + b[2] * tri[2], b)
}

/// Area-weighted uniform surface samples with source faces and face
/// normals. Deterministic per seed.
pub fn sample_surface(mesh: &TriMesh, n: usize, seed: u64) -> Result<PointSet> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    let mut cdf = Vec::with_capacity(mesh.face_count());
    let mut acc = 0.0;
    for f in 0..mesh.face_count() {
        acc += mesh.face_area(f);
        cdf.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::Degenerate("mesh has zero surface area".into()));
    }
    let mut rng = rng::seeded(seed);
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    let mut source = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random::<f64>() * acc;
        let face = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        let tri = mesh.triangle(face);
        let (p, _) = triangle_point(&tri, rng.random(), rng.random());
        points.push(p);
        normals.push(mesh.face_normal(face));
        source.push(face as u32);
    }
    Ok(PointSet {
        points,
        normals: Some(normals),
        source_face: Some(source),
        source_pixel: None,
    })
}

/// Rejection-samples points inside a closed mesh using +x ray parity.
/// Rays that graze an edge are re-cast with a jittered direction.
pub fn sample_interior(mesh: &TriMesh, n: usize, seed: u64) -> Result<PointSet> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    let bvh = Bvh::build(mesh);
    let bounds = mesh.bounds();
    let ext = bounds.extent();
    let mut rng = rng::seeded(seed);
    let mut points = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while points.len() < n {
        attempts += 1;
        if attempts >= 10_000 && points.len() * 1000 < attempts {
            return Err(Error::RejectionRate {
                accepted: points.len(),
                attempts,
            });
        }
        let p = bounds.min + ext * DVec3::new(rng.random(), rng.random(), rng.random());
        if is_inside(&bvh, p, &mut rng) {
            points.push(p);
        }
    }
    PointSet::new(points)
}

fn is_inside(bvh: &Bvh, p: DVec3, rng: &mut impl Rng) -> bool {
    let mut dir = DVec3::X;
    for _ in 0..8 {
        if let Some(c) = bvh.crossings(p, dir) {
            return c % 2 == 1;
        }
        dir = (DVec3::X
            + 1e-3
                * DVec3::new(
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                ))
        .normalize();
    }
    false
}
