use std::collections::HashMap;

use glam::DVec3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: DVec3,
    pub max: DVec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: DVec3::splat(f64::INFINITY),
            max: DVec3::splat(f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a DVec3>) -> Self {
        let mut b = Aabb::empty();
        for p in points {
            b.grow(*p);
        }
        b
    }

    pub fn grow(&mut self, p: DVec3) {
        self.min = self.min.min(p);
        self.max = self.max.max(p);
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.min(other.min),
            max: self.max.max(other.max),
        }
    }

    pub fn extent(&self) -> DVec3 {
        self.max - self.min
    }

    pub fn center(&self) -> DVec3 {
        0.5 * (self.min + self.max)
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x
    }

    /// Slab test; returns the entry distance if the ray hits within `[0, t_max]`.
    pub(crate) fn ray_entry(&self, origin: DVec3, inv_dir: DVec3, t_max: f64) -> Option<f64> {
        let t0 = (self.min - origin) * inv_dir;
        let t1 = (self.max - origin) * inv_dir;
        let near = t0.min(t1);
        let far = t0.max(t1);
        let t_enter = near.x.max(near.y).max(near.z).max(0.0);
        let t_exit = far.x.min(far.y).min(far.z).min(t_max);
        (t_enter <= t_exit).then_some(t_enter)
    }
}

/// Indexed triangle mesh with its edge-based face adjacency.
///
/// Two faces are adjacent when they share an edge (both endpoints). Edges
/// with more than two incident faces connect all of them.
#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh {
    vertices: Vec<DVec3>,
    faces: Vec<[u32; 3]>,
    adjacency: Vec<Vec<u32>>,
}

impl TriMesh {
    pub fn new(vertices: Vec<DVec3>, faces: Vec<[u32; 3]>) -> Result<Self> {
        if faces.is_empty() {
            return Err(Error::EmptyMesh);
        }
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&v| v as usize >= n) {
                return Err(Error::InvalidArgument(format!(
                    "face {fi} references a vertex outside 0..{n}"
                )));
            }
        }
        if let Some(index) = vertices.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteCoordinate { index });
        }
        let adjacency = build_adjacency(&faces);
        Ok(TriMesh {
            vertices,
            faces,
            adjacency,
        })
    }

    pub fn vertices(&self) -> &[DVec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// Edge-adjacent faces of every face, sorted ascending.
    pub fn face_adjacency(&self) -> &[Vec<u32>] {
        &self.adjacency
    }

    pub fn triangle(&self, face: usize) -> [DVec3; 3] {
        let [a, b, c] = self.faces[face];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.triangle(face);
        0.5 * (b - a).cross(c - a).length()
    }

    pub fn face_centroid(&self, face: usize) -> DVec3 {
        let [a, b, c] = self.triangle(face);
        (a + b + c) / 3.0
    }

    pub fn face_normal(&self, face: usize) -> DVec3 {
        let [a, b, c] = self.triangle(face);
        (b - a).cross(c - a).normalize_or_zero()
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Applies `f` to every vertex, keeping connectivity.
    pub fn map_vertices(&self, f: impl Fn(DVec3) -> DVec3) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|&v| f(v)).collect(),
            faces: self.faces.clone(),
            adjacency: self.adjacency.clone(),
        }
    }

    /// Connected component id per face (dense, ordered by first face).
    pub fn face_components(&self) -> Vec<u32> {
        let mut comp = vec![u32::MAX; self.faces.len()];
        let mut next = 0;
        let mut stack = Vec::new();
        for start in 0..self.faces.len() {
            if comp[start] != u32::MAX {
                continue;
            }
            comp[start] = next;
            stack.push(start);
            while let Some(f) = stack.pop() {
                for &g in &self.adjacency[f] {
                    if comp[g as usize] == u32::MAX {
                        comp[g as usize] = next;
                        stack.push(g as usize);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    /// Splits every face into four by edge midpoints. Child faces of parent
    /// `f` are `4f..4f+4`.
    pub fn subdivide(&self) -> TriMesh {
        let mut vertices = self.vertices.clone();
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut mid = |a: u32, b: u32, vertices: &mut Vec<DVec3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                vertices.push(0.5 * (vertices[a as usize] + vertices[b as usize]));
                (vertices.len() - 1) as u32
            })
        };
        let mut faces = Vec::with_capacity(self.faces.len() * 4);
        for &[a, b, c] in &self.faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            faces.extend_from_slice(&[[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        TriMesh::new(vertices, faces).expect("subdivision preserves validity")
    }
}

fn build_adjacency(faces: &[[u32; 3]]) -> Vec<Vec<u32>> {
    let mut edges: HashMap<(u32, u32), Vec<u32>> = HashMap::with_capacity(faces.len() * 3 / 2);
    for (fi, f) in faces.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            if a == b {
                continue;
            }
            edges.entry((a.min(b), a.max(b))).or_default().push(fi as u32);
        }
    }
    let mut adjacency = vec![Vec::new(); faces.len()];
    for incident in edges.values() {
        for &f in incident {
            for &g in incident {
                if f != g {
                    adjacency[f as usize].push(g);
                }
            }
        }
    }
    for list in &mut adjacency {
        list.sort_unstable();
        list.dedup();
    }
    adjacency
}
