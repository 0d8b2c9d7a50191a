use glam::DVec3;

/// Static 3D k-d tree for nearest-neighbor queries.
#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<DVec3>,
    // Implicit balanced tree over `order`; node at range midpoint.
    order: Vec<u32>,
    axes: Vec<u8>,
}

impl KdTree {
    pub fn new(points: &[DVec3]) -> KdTree {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut axes = vec![0u8; points.len()];
        build(points, &mut order, &mut axes, 0, points.len());
        KdTree {
            points: points.to_vec(),
            order,
            axes,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nearest point as `(index, squared distance)`; ties go to the lower
    /// index.
    pub fn nearest(&self, q: DVec3) -> Option<(usize, f64)> {
        self.nearest_filtered(q, usize::MAX)
    }

    /// Nearest point other than `skip`.
    pub fn nearest_excluding(&self, q: DVec3, skip: usize) -> Option<(usize, f64)> {
        self.nearest_filtered(q, skip)
    }

    fn nearest_filtered(&self, q: DVec3, skip: usize) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        self.search(q, skip, 0, self.order.len(), &mut best);
        best
    }

    fn search(&self, q: DVec3, skip: usize, lo: usize, hi: usize, best: &mut Option<(usize, f64)>) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let idx = self.order[mid] as usize;
        let p = self.points[idx];
        if idx != skip {
            let d2 = (p - q).length_squared();
            let better = match *best {
                None => true,
                Some((bi, bd)) => d2 < bd || (d2 == bd && idx < bi),
            };
            if better {
                *best = Some((idx, d2));
            }
        }
        let axis = self.axes[mid] as usize;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff <= 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(q, skip, near.0, near.1, best);
        // `<=` keeps equal-distance candidates reachable for tie-breaking.
        if best.is_none_or(|(_, bd)| diff * diff <= bd) {
            self.search(q, skip, far.0, far.1, best);
        }
    }

    /// Median distance from each point to its nearest other point.
    pub fn median_nn_spacing(&self) -> f64 {
        if self.points.len() < 2 {
            return 0.0;
        }
        let mut d: Vec<f64> = (0..self.points.len())
            .map(|i| {
                self.nearest_excluding(self.points[i], i)
                    .map_or(0.0, |(_, d2)| d2.sqrt())
            })
            .collect();
        let mid = d.len() / 2;
        *d.select_nth_unstable_by(mid, f64::total_cmp).1
    }
}

fn build(points: &[DVec3], order: &mut [u32], axes: &mut [u8], lo: usize, hi: usize) {
    if hi - lo <= 1 {
        return;
    }
    let mut min = DVec3::splat(f64::INFINITY);
    let mut max = DVec3::splat(f64::NEG_INFINITY);
    for &i in &order[lo..hi] {
        min = min.min(points[i as usize]);
        max = max.max(points[i as usize]);
    }
    let axis = (max - min).max_position();
    let mid = (lo + hi) / 2;
    order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
        points[a as usize][axis].total_cmp(&points[b as usize][axis])
    });
    axes[mid] = axis as u8;
    build(points, order, axes, lo, mid);
    build(points, order, axes, mid + 1, hi);
}
