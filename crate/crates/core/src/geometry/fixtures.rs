//! Procedural test shapes.

use std::collections::HashMap;

use glam::DVec3;

use super::TriMesh;

/// A mesh with per-face ground-truth part labels.
#[derive(Clone, Debug)]
pub struct LabeledMesh {
    pub mesh: TriMesh,
    pub face_labels: Vec<u32>,
}

/// Closed axis-aligned box with outward-facing triangles.
pub fn box_mesh(min: DVec3, max: DVec3) -> TriMesh {
    let occ = |_: [usize; 3]| true;
    let (vertices, faces, _) = voxel_surface([1, 1, 1], &occ);
    let ext = max - min;
    let vertices = vertices.into_iter().map(|v| min + v * ext).collect();
    TriMesh::new(vertices, faces).expect("box is valid")
}

/// Two cubes joined by a square bar along x, built from the boundary of a
/// voxel grid so the surface is closed and connected. Labels: 0 = cube at
/// -x, 1 = bar, 2 = cube at +x. `res` must be even; `res = 4` gives 1728
/// faces. The shape spans x in [-1, 1] and y, z in [-1/3, 1/3].
pub fn dumbbell(res: usize) -> LabeledMesh {
    assert!(res >= 2 && res.is_multiple_of(2), "dumbbell resolution must be even");
    let dims = [6 * res, 2 * res, 2 * res];
    let (lo, hi) = (res / 2, 3 * res / 2);
    let occ = |[i, j, k]: [usize; 3]| {
        let in_cube = i < 2 * res || i >= 4 * res;
        in_cube || ((lo..hi).contains(&j) && (lo..hi).contains(&k))
    };
    let label_of = |i: usize| {
        if i < 2 * res {
            0
        } else if i < 4 * res {
            1
        } else {
            2
        }
    };
    let (vertices, faces, voxel) = voxel_surface(dims, &occ);
    let h = 1.0 / (3 * res) as f64;
    let origin = DVec3::new(-1.0, -(res as f64) * h, -(res as f64) * h);
    let vertices = vertices.into_iter().map(|v| origin + v * h).collect();
    LabeledMesh {
        mesh: TriMesh::new(vertices, faces).expect("voxel surface is valid"),
        face_labels: voxel.iter().map(|v| label_of(v[0])).collect(),
    }
}

/// A stack of three slabs along z (bottom, middle, top) with a shared
/// footprint, so neighboring parts touch across their full width.
pub fn slab_stack(res: usize) -> LabeledMesh {
    assert!(res >= 1);
    let dims = [6 * res, 6 * res, 3 * res];
    let occ = |_: [usize; 3]| true;
    let (vertices, faces, voxel) = voxel_surface(dims, &occ);
    let h = 2.0 / (6 * res) as f64;
    let origin = DVec3::new(-1.0, -1.0, -0.5);
    LabeledMesh {
        mesh: TriMesh::new(vertices.into_iter().map(|v| origin + v * h).collect(), faces)
            .expect("voxel surface is valid"),
        face_labels: voxel.iter().map(|v| (v[2] / res) as u32).collect(),
    }
}

/// A square bar along x cut into consecutive parts of the given lengths (in
/// voxels) with a `side` x `side` voxel cross-section. Each interior part
/// borders two others across a full cross-section. The bar spans x in
/// [-1, 1].
pub fn segmented_bar(lengths: &[usize], side: usize) -> LabeledMesh {
    assert!(!lengths.is_empty() && lengths.iter().all(|&l| l > 0) && side > 0);
    let total: usize = lengths.iter().sum();
    let mut part_of = Vec::with_capacity(total);
    for (part, &len) in lengths.iter().enumerate() {
        part_of.extend(std::iter::repeat_n(part as u32, len));
    }
    let dims = [total, side, side];
    let occ = |_: [usize; 3]| true;
    let (vertices, faces, voxel) = voxel_surface(dims, &occ);
    let h = 2.0 / total as f64;
    let half = side as f64 * h / 2.0;
    let origin = DVec3::new(-1.0, -half, -half);
    LabeledMesh {
        mesh: TriMesh::new(vertices.into_iter().map(|v| origin + v * h).collect(), faces)
            .expect("voxel surface is valid"),
        face_labels: voxel.iter().map(|v| part_of[v[0]]).collect(),
    }
}

type VoxelSurface = (Vec<DVec3>, Vec<[u32; 3]>, Vec<[usize; 3]>);

/// Boundary quads of occupied voxels (two triangles each) in voxel units,
/// with the voxel each face came from.
fn voxel_surface(dims: [usize; 3], occupied: &dyn Fn([usize; 3]) -> bool) -> VoxelSurface {
    let inside = |c: [i64; 3]| {
        (0..3).all(|a| c[a] >= 0 && (c[a] as usize) < dims[a])
            && occupied([c[0] as usize, c[1] as usize, c[2] as usize])
    };
    let mut index: HashMap<[i64; 3], u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut vid = |c: [i64; 3], vertices: &mut Vec<DVec3>| -> u32 {
        *index.entry(c).or_insert_with(|| {
            vertices.push(DVec3::new(c[0] as f64, c[1] as f64, c[2] as f64));
            (vertices.len() - 1) as u32
        })
    };
    let mut faces = Vec::new();
    let mut source = Vec::new();
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                let v = [i as i64, j as i64, k as i64];
                if !inside(v) {
                    continue;
                }
                for axis in 0..3 {
                    for positive in [false, true] {
                        let mut nb = v;
                        nb[axis] += if positive { 1 } else { -1 };
                        if inside(nb) {
                            continue;
                        }
                        let (ua, va) = ((axis + 1) % 3, (axis + 2) % 3);
                        let mut base = v;
                        if positive {
                            base[axis] += 1;
                        }
                        let corner = |du: i64, dv: i64| {
                            let mut c = base;
                            c[ua] += du;
                            c[va] += dv;
                            c
                        };
                        let mut quad = [corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)];
                        if !positive {
                            quad.reverse();
                        }
                        let q = quad.map(|c| vid(c, &mut vertices));
                        faces.push([q[0], q[1], q[2]]);
                        faces.push([q[0], q[2], q[3]]);
                        source.push([i, j, k]);
                        source.push([i, j, k]);
                    }
                }
            }
        }
    }
    (vertices, faces, source)
}

/// Icosphere centered at the origin.
pub fn icosphere(radius: f64, subdivisions: usize) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<DVec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| DVec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(u32, u32), u32> = HashMap::new();
        let mut mid = |a: u32, b: u32, vertices: &mut Vec<DVec3>| {
            *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
                vertices.push((vertices[a as usize] + vertices[b as usize]).normalize());
                (vertices.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices = vertices.into_iter().map(|v| v * radius).collect();
    TriMesh::new(vertices, faces).expect("icosphere is valid")
}
