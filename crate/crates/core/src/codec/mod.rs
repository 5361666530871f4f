//! A stand-in for octree geometry coding: lossy quantization to a lower bit
//! depth, an honest bitstream to measure rate, and the side channel used by
//! the adaptive determination strategy.

pub mod lossless;
pub mod octree;
pub mod side_channel;
pub mod varint;

pub use lossless::{compress_lossless, decompress_lossless, LosslessCodec, Lzma};
pub use octree::{octree_decode, octree_encode};
pub use side_channel::{decode_counts, encode_side_channel, SideChannel};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

/// Where a merged voxel is placed when scaling back to full resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reconstruction {
    /// Low corner of the merged cell, as an octree decoder would emit.
    #[default]
    LowCorner,
    /// Centre of the merged cell (rounded down).
    Centered,
}

/// Rate of one coded operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    pub bits: u64,
    pub bpp: f64,
    pub target_depth: u32,
}

fn check_target(pc: &PointCloud, target_depth: u32) -> Result<u32> {
    if target_depth == 0 || target_depth > pc.depth() {
        return Err(Error::Domain(format!(
            "target depth {target_depth} outside 1..={}",
            pc.depth()
        )));
    }
    Ok(pc.depth() - target_depth)
}

/// The cloud as coded at `target_depth`: coordinates shifted down and merged.
pub fn downscale(pc: &PointCloud, target_depth: u32) -> Result<PointCloud> {
    let shift = check_target(pc, target_depth)?;
    let points = pc.points().iter().map(|p| p.map(|c| c >> shift)).collect();
    PointCloud::new(points, target_depth)
}

/// Quantizes to `target_depth` and reconstructs at the original depth with
/// low-corner placement.
pub fn quantize_decode(pc: &PointCloud, target_depth: u32) -> Result<PointCloud> {
    quantize_decode_with(pc, target_depth, Reconstruction::LowCorner)
}

pub fn quantize_decode_with(
    pc: &PointCloud,
    target_depth: u32,
    placement: Reconstruction,
) -> Result<PointCloud> {
    let shift = check_target(pc, target_depth)?;
    let offset = match placement {
        Reconstruction::LowCorner => 0,
        Reconstruction::Centered if shift > 0 => 1u32 << (shift - 1),
        Reconstruction::Centered => 0,
    };
    let points = pc
        .points()
        .iter()
        .map(|p| p.map(|c| ((c >> shift) << shift) + offset))
        .collect();
    PointCloud::new(points, pc.depth())
}

/// Codes `gt` at `target_depth`, returning the decoded cloud and its rate.
///
/// Bits are the size of the octree stream of the downscaled cloud; bpp
/// divides by the ground-truth point count.
pub fn rate_point(gt: &PointCloud, target_depth: u32) -> Result<(PointCloud, RatePoint)> {
    if gt.is_empty() {
        return Err(Error::Input("cannot measure rate of an empty cloud".into()));
    }
    let decoded = quantize_decode(gt, target_depth)?;
    let coded = downscale(gt, target_depth)?;
    let bits = octree_encode(&coded).len() as u64 * 8;
    Ok((
        decoded,
        RatePoint {
            bits,
            bpp: bits as f64 / gt.len() as f64,
            target_depth,
        },
    ))
}
