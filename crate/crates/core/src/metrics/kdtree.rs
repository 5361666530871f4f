//! Exact nearest-neighbour queries on integer voxel coordinates.

use crate::cloud::Point;

/// Balanced kd-tree stored implicitly: each subslice keeps its splitting
/// point at the midpoint, split axis cycling x, y, z with depth.
pub struct KdTree {
    points: Vec<Point>,
}

fn sq_dist(a: &Point, b: &Point) -> u64 {
    (0..3)
        .map(|i| {
            let d = i64::from(a[i]) - i64::from(b[i]);
            (d * d) as u64
        })
        .sum()
}

fn build(points: &mut [Point], depth: usize) {
    if points.len() <= 1 {
        return;
    }
    let axis = depth % 3;
    let mid = points.len() / 2;
    points.select_nth_unstable_by_key(mid, |p| p[axis]);
    let (left, right) = points.split_at_mut(mid);
    build(left, depth + 1);
    build(&mut right[1..], depth + 1);
}

impl KdTree {
    pub fn new(points: &[Point]) -> Self {
        let mut points = points.to_vec();
        build(&mut points, 0);
        KdTree { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Squared distance from `q` to its nearest stored point, `None` when
    /// the tree is empty.
    pub fn nearest_sq(&self, q: &Point) -> Option<u64> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = u64::MAX;
        self.search(&self.points, 0, q, &mut best);
        Some(best)
    }

    fn search(&self, pts: &[Point], depth: usize, q: &Point, best: &mut u64) {
        if pts.is_empty() || *best == 0 {
            return;
        }
        let mid = pts.len() / 2;
        let node = &pts[mid];
        *best = (*best).min(sq_dist(node, q));
        let axis = depth % 3;
        let diff = i64::from(q[axis]) - i64::from(node[axis]);
        let (near, far) = if diff < 0 {
            (&pts[..mid], &pts[mid + 1..])
        } else {
            (&pts[mid + 1..], &pts[..mid])
        };
        self.search(near, depth + 1, q, best);
        if ((diff * diff) as u64) < *best {
            self.search(far, depth + 1, q, best);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn matches_brute_force(
            points in prop::collection::vec(prop::array::uniform3(0u32..50), 1..200),
            queries in prop::collection::vec(prop::array::uniform3(0u32..50), 1..50),
        ) {
            let tree = KdTree::new(&points);
            for q in &queries {
                let brute = points.iter().map(|p| sq_dist(p, q)).min();
                prop_assert_eq!(tree.nearest_sq(q), brute);
            }
        }
    }

    #[test]
    fn empty_tree() {
        assert_eq!(KdTree::new(&[]).nearest_sq(&[0, 0, 0]), None);
    }
}
