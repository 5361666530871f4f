//! Partition, predict, threshold, combine.

use std::collections::HashMap;

use rayon::prelude::*;

use super::model::{ModelWeights, ProbabilityCube};
use super::threshold::{apply_adaptive_threshold, apply_fixed_threshold, check_sigma};
use crate::cloud::PointCloud;
use crate::codec::side_channel::{encode_side_channel, SideChannel};
use crate::error::{Error, Result};
use crate::parallel::pool;
use crate::partition::{combine, partition, CubeSize, OccupancyCube};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy<'a> {
    Fixed(f64),
    /// Per-cube point counts in the decoded cloud's cube order.
    Adaptive(&'a [u64]),
}

/// Network predictions for every cube, in input order.
pub fn predict_cubes(weights: &ModelWeights, cubes: &[OccupancyCube]) -> Result<Vec<ProbabilityCube>> {
    pool().install(|| cubes.par_iter().map(|c| weights.predict(c)).collect())
}

/// Thresholds predictions and reassembles them into a depth-`depth` cloud.
pub fn determine(probs: &[ProbabilityCube], strategy: Strategy, depth: u32) -> Result<PointCloud> {
    let cubes = match strategy {
        Strategy::Fixed(sigma) => {
            check_sigma(sigma)?;
            probs.iter().map(|q| apply_fixed_threshold(q, sigma)).collect::<Vec<_>>()
        }
        Strategy::Adaptive(counts) => {
            if counts.len() != probs.len() {
                return Err(Error::Input(format!(
                    "side channel carries {} counts for {} cubes",
                    counts.len(),
                    probs.len()
                )));
            }
            probs
                .iter()
                .zip(counts)
                .map(|(q, &k)| apply_adaptive_threshold(q, k as usize))
                .collect::<Result<Vec<_>>>()?
        }
    };
    combine(&cubes, depth)
}

pub fn refine(pc_dec: &PointCloud, weights: &ModelWeights, strategy: Strategy) -> Result<PointCloud> {
    let cubes = partition(pc_dec, weights.config().cube_size)?;
    let probs = predict_cubes(weights, &cubes)?;
    determine(&probs, strategy, pc_dec.depth())
}

/// Ground-truth point count of every non-empty cube of `pc_dec`.
pub fn side_channel_counts(pc_dec: &PointCloud, gt: &PointCloud, size: CubeSize) -> Result<Vec<u64>> {
    let gt_counts: HashMap<_, _> = partition(gt, size)?
        .into_iter()
        .map(|c| (c.index, c.occupied_count() as u64))
        .collect();
    Ok(partition(pc_dec, size)?
        .iter()
        .map(|c| gt_counts.get(&c.index).copied().unwrap_or(0))
        .collect())
}

pub fn build_side_channel(pc_dec: &PointCloud, gt: &PointCloud, size: CubeSize) -> Result<SideChannel> {
    Ok(encode_side_channel(&side_channel_counts(pc_dec, gt, size)?))
}
