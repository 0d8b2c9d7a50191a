//! Bounding volume hierarchy over mesh triangles.

use glam::DVec3;

use super::{Aabb, TriMesh};

/// Rays ignore intersections at or below this distance.
pub const RAY_EPSILON: f64 = 1e-6;

const LEAF_SIZE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayHit {
    pub face: u32,
    /// Distance along the ray in units of the direction's length.
    pub t: f64,
    pub barycentric: [f64; 3],
}

/// Möller–Trumbore ray/triangle intersection. Returns `(t, barycentric)`
/// for hits with `t > RAY_EPSILON`.
pub fn intersect_triangle(origin: DVec3, dir: DVec3, tri: &[DVec3; 3]) -> Option<(f64, [f64; 3])> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(e2);
    let det = e1.dot(p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri[0];
    let u = s.dot(p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = dir.dot(q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(q) * inv;
    (t > RAY_EPSILON).then_some((t, [1.0 - u - v, u, v]))
}

#[derive(Clone, Debug)]
struct Node {
    bounds: Aabb,
    // Leaf: `count > 0`, triangles `start..start + count` of `order`.
    // Interior: children at `start` and `start + 1`.
    start: u32,
    count: u32,
}

/// Read-only after construction; safe to share across threads.
#[derive(Clone, Debug)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
    tris: Vec<[DVec3; 3]>,
}

impl Bvh {
    pub fn build(mesh: &TriMesh) -> Bvh {
        let tris: Vec<[DVec3; 3]> = (0..mesh.face_count()).map(|f| mesh.triangle(f)).collect();
        let centroids: Vec<DVec3> = tris.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        let boxes: Vec<Aabb> = tris.iter().map(|t| Aabb::from_points(t.iter())).collect();
        let mut order: Vec<u32> = (0..tris.len() as u32).collect();
        let mut nodes = vec![Node {
            bounds: Aabb::empty(),
            start: 0,
            count: 0,
        }];
        let mut stack = vec![(0usize, 0usize, tris.len())];
        while let Some((node, lo, hi)) = stack.pop() {
            let bounds = order[lo..hi]
                .iter()
                .fold(Aabb::empty(), |b, &i| b.union(&boxes[i as usize]));
            nodes[node].bounds = bounds;
            if hi - lo <= LEAF_SIZE {
                nodes[node].start = lo as u32;
                nodes[node].count = (hi - lo) as u32;
                continue;
            }
            let cb = Aabb::from_points(order[lo..hi].iter().map(|&i| &centroids[i as usize]));
            let axis = cb.extent().max_position();
            let mid = (lo + hi) / 2;
            order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
                centroids[a as usize][axis].total_cmp(&centroids[b as usize][axis])
            });
            let left = nodes.len();
            nodes.push(Node {
                bounds: Aabb::empty(),
                start: 0,
                count: 0,
            });
            nodes.push(Node {
                bounds: Aabb::empty(),
                start: 0,
                count: 0,
            });
            nodes[node].start = left as u32;
            stack.push((left, lo, mid));
            stack.push((left + 1, mid, hi));
        }
        Bvh { nodes, order, tris }
    }

    /// Nearest hit with `t > RAY_EPSILON`, or `None` on a miss. Ties in `t`
    /// resolve to the lowest face index.
    pub fn ray_cast(&self, origin: DVec3, dir: DVec3) -> Option<RayHit> {
        debug_assert!(dir != DVec3::ZERO);
        let inv = dir.recip();
        let mut best: Option<RayHit> = None;
        let mut t_max = f64::INFINITY;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if node.bounds.ray_entry(origin, inv, t_max).is_none() {
                continue;
            }
            if node.count > 0 {
                let s = node.start as usize;
                for &fi in &self.order[s..s + node.count as usize] {
                    if let Some((t, bary)) = intersect_triangle(origin, dir, &self.tris[fi as usize]) {
                        let better = match best {
                            None => true,
                            Some(b) => t < b.t || (t == b.t && fi < b.face),
                        };
                        if better {
                            t_max = t;
                            best = Some(RayHit {
                                face: fi,
                                t,
                                barycentric: bary,
                            });
                        }
                    }
                }
            } else {
                let l = node.start as usize;
                let tl = self.nodes[l].bounds.ray_entry(origin, inv, t_max);
                let tr = self.nodes[l + 1].bounds.ray_entry(origin, inv, t_max);
                match (tl, tr) {
                    (Some(a), Some(b)) => {
                        // Visit the nearer child first.
                        if a <= b {
                            stack.push(l + 1);
                            stack.push(l);
                        } else {
                            stack.push(l);
                            stack.push(l + 1);
                        }
                    }
                    (Some(_), None) => stack.push(l),
                    (None, Some(_)) => stack.push(l + 1),
                    (None, None) => {}
                }
            }
        }
        best
    }

    /// Number of surface crossings along the ray, or `None` if any crossing
    /// is too close to a triangle edge to count reliably.
    pub fn crossings(&self, origin: DVec3, dir: DVec3) -> Option<usize> {
        const EDGE_TOL: f64 = 1e-9;
        let inv = dir.recip();
        let mut count = 0;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if node.bounds.ray_entry(origin, inv, f64::INFINITY).is_none() {
                continue;
            }
            if node.count > 0 {
                let s = node.start as usize;
                for &fi in &self.order[s..s + node.count as usize] {
                    let tri = &self.tris[fi as usize];
                    if let Some((_, bary)) = intersect_triangle(origin, dir, tri) {
                        if bary.iter().any(|&b| b < EDGE_TOL) {
                            return None;
                        }
                        count += 1;
                    } else if grazes(origin, dir, tri) {
                        return None;
                    }
                }
            } else {
                stack.push(node.start as usize);
                stack.push(node.start as usize + 1);
            }
        }
        Some(count)
    }

    pub fn triangle_count(&self) -> usize {
        self.tris.len()
    }
}

/// True when the ray is (nearly) coplanar with the triangle and passes
/// through its plane region, where Möller–Trumbore reports no hit.
fn grazes(origin: DVec3, dir: DVec3, tri: &[DVec3; 3]) -> bool {
    let n = (tri[1] - tri[0]).cross(tri[2] - tri[0]);
    let nl = n.length();
    if nl == 0.0 {
        return false;
    }
    let parallel = (n.dot(dir) / (nl * dir.length())).abs() < 1e-12;
    let in_plane = ((origin - tri[0]).dot(n) / nl).abs() < 1e-9;
    parallel && in_plane
}
