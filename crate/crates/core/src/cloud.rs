//! The integer-voxel point cloud that every stage of the pipeline consumes.

use crate::error::{Error, Result};

/// A voxel coordinate `[x, y, z]`.
pub type Point = [u32; 3];

/// Largest supported bit depth. Coordinates stay exactly representable as
/// 32-bit floats up to this depth.
pub const MAX_DEPTH: u32 = 24;

/// A set of unique voxel coordinates on a `2^depth` grid.
///
/// Points are kept sorted lexicographically by `(x, y, z)` and duplicate
/// free, so two clouds holding the same set compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PointCloud {
    points: Vec<Point>,
    depth: u32,
}

impl PointCloud {
    /// Builds a cloud from arbitrary points, sorting and deduplicating them.
    pub fn new(mut points: Vec<Point>, depth: u32) -> Result<Self> {
        check_depth(depth)?;
        let limit = 1u64 << depth;
        if let Some(p) = points
            .iter()
            .find(|p| p.iter().any(|&c| u64::from(c) >= limit))
        {
            return Err(Error::Domain(format!(
                "point {p:?} outside the 2^{depth} grid"
            )));
        }
        points.sort_unstable();
        points.dedup();
        Ok(PointCloud { points, depth })
    }

    /// Builds a cloud whose depth is the smallest that holds every point.
    /// An empty cloud gets depth 1.
    pub fn with_inferred_depth(points: Vec<Point>) -> Result<Self> {
        let depth = minimal_depth(&points);
        Self::new(points, depth)
    }

    pub fn empty(depth: u32) -> Result<Self> {
        Self::new(Vec::new(), depth)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.points.binary_search(p).is_ok()
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }
}

pub(crate) fn check_depth(depth: u32) -> Result<()> {
    if depth == 0 || depth > MAX_DEPTH {
        return Err(Error::Domain(format!(
            "bit depth {depth} outside 1..={MAX_DEPTH}"
        )));
    }
    Ok(())
}

/// Smallest `d >= 1` with every coordinate below `2^d`.
pub fn minimal_depth(points: &[Point]) -> u32 {
    let max = points
        .iter()
        .flat_map(|p| p.iter().copied())
        .max()
        .unwrap_or(0);
    (u32::BITS - max.leading_zeros()).max(1)
}
