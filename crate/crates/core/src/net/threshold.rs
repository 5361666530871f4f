//! Determination strategies turning probabilities into occupancy.

use std::cmp::Ordering;

use super::model::ProbabilityCube;
use crate::error::{Error, Result};
use crate::partition::{OccupancyCube, VoxelGrid};

pub const DEFAULT_SIGMA: f64 = 0.98;

pub fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("sigma must lie in (0, 1), got {sigma}")))
    }
}

/// Occupies every voxel whose probability is strictly above `sigma`,
/// compared at the `f32` precision of the probabilities.
pub fn apply_fixed_threshold(q: &ProbabilityCube, sigma: f64) -> OccupancyCube {
    let sigma = sigma as f32;
    let mut voxels = VoxelGrid::new(q.size);
    for (i, &p) in q.probs.iter().enumerate() {
        if p > sigma {
            voxels.set_linear(i, true);
        }
    }
    OccupancyCube {
        index: q.index,
        voxels,
    }
}

/// Occupies the `k` most probable voxels. Equal probabilities are ranked by
/// lexicographic `(x, y, z)` voxel coordinate, lowest first.
pub fn apply_adaptive_threshold(q: &ProbabilityCube, k: usize) -> Result<OccupancyCube> {
    let mut voxels = VoxelGrid::new(q.size);
    let n = voxels.len();
    if k > n {
        return Err(Error::Input(format!("cannot select {k} of {n} voxels")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if k > 0 && k < n {
        let rank = |a: &usize, b: &usize| -> Ordering {
            q.probs[*b]
                .total_cmp(&q.probs[*a])
                .then_with(|| voxels.coord(*a).cmp(&voxels.coord(*b)))
        };
        order.select_nth_unstable_by(k - 1, rank);
    }
    for &i in &order[..k] {
        voxels.set_linear(i, true);
    }
    Ok(OccupancyCube {
        index: q.index,
        voxels,
    })
}
