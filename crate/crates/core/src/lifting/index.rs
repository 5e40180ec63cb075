use crate::geometry::{dist2, Vec3};
use crate::scene::PointCloud;

/// Static kd-tree over a point cloud, stored implicitly: each subrange of
/// `order` holds its splitting point at the midpoint.
///
/// Searches return exactly what a linear scan would, including the tie rule
/// (lowest id wins among equidistant points).
#[derive(Debug, Clone)]
pub struct PointIndex {
    points: Vec<Vec3>,
    order: Vec<u32>,
}

#[derive(Clone, Copy)]
struct Best {
    d2: f64,
    id: Option<u32>,
}

impl Best {
    #[inline]
    fn offer(&mut self, d2: f64, id: u32) {
        if d2 < self.d2 || (d2 == self.d2 && self.id.map_or(true, |b| id < b)) {
            self.d2 = d2;
            self.id = Some(id);
        }
    }
}

impl PointIndex {
    pub fn new(cloud: &PointCloud) -> Self {
        Self::from_points((0..cloud.len() as u32).map(|i| cloud.point(i)).collect())
    }

    pub fn from_points(points: Vec<Vec3>) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        build(&points, &mut order, 0);
        Self { points, order }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, id: u32) -> Vec3 {
        self.points[id as usize]
    }

    /// Nearest point with squared distance at most `max_d2`.
    pub fn nearest_within(&self, q: Vec3, max_d2: f64) -> Option<(u32, f64)> {
        let mut best = Best { d2: max_d2, id: None };
        self.search(q, &self.order, 0, None, &mut best);
        best.id.map(|id| (id, best.d2))
    }

    pub fn nearest(&self, q: Vec3) -> Option<(u32, f64)> {
        self.nearest_within(q, f64::INFINITY)
    }

    /// Unique nearest cloud point within `epsilon` meters (inclusive).
    pub fn associate(&self, q: Vec3, epsilon: f64) -> Option<u32> {
        self.nearest_within(q, epsilon * epsilon).map(|(id, _)| id)
    }

    fn search(&self, q: Vec3, range: &[u32], depth: usize, skip: Option<u32>, best: &mut Best) {
        if range.is_empty() {
            return;
        }
        let mid = range.len() / 2;
        let id = range[mid];
        let p = self.points[id as usize];
        if skip != Some(id) {
            best.offer(dist2(q, p), id);
        }
        let axis = depth % 3;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 { (&range[..mid], &range[mid + 1..]) } else { (&range[mid + 1..], &range[..mid]) };
        self.search(q, near, depth + 1, skip, best);
        // Equality must still descend so equidistant lower ids are found.
        if diff * diff <= best.d2 {
            self.search(q, far, depth + 1, skip, best);
        }
    }

    /// Distance from every point to its nearest other point.
    pub fn nearest_neighbor_distances(&self) -> Vec<f64> {
        (0..self.points.len() as u32)
            .map(|id| {
                let mut best = Best { d2: f64::INFINITY, id: None };
                self.search(self.points[id as usize], &self.order, 0, Some(id), &mut best);
                best.d2.sqrt()
            })
            .collect()
    }

    /// Median nearest-neighbor spacing; 0 for clouds with fewer than two points.
    pub fn median_spacing(&self) -> f64 {
        let mut d = self.nearest_neighbor_distances();
        d.retain(|v| v.is_finite());
        if d.is_empty() {
            return 0.0;
        }
        d.sort_by(f64::total_cmp);
        let n = d.len();
        if n % 2 == 1 {
            d[n / 2]
        } else {
            (d[n / 2 - 1] + d[n / 2]) / 2.0
        }
    }
}

fn build(points: &[Vec3], range: &mut [u32], depth: usize) {
    if range.len() <= 1 {
        return;
    }
    let axis = depth % 3;
    let mid = range.len() / 2;
    range.select_nth_unstable_by(mid, |a, b| {
        points[*a as usize][axis].total_cmp(&points[*b as usize][axis]).then(a.cmp(b))
    });
    let (left, rest) = range.split_at_mut(mid);
    build(points, left, depth + 1);
    build(points, &mut rest[1..], depth + 1);
}
