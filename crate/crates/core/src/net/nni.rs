//! Nearest-neighbour interpolation baseline.

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

/// Expands every coded voxel of step `2^levels` into all of its children,
/// so `|out| == |pc| * 8^levels`.
pub fn nni_upsample(pc: &PointCloud, levels: u32) -> Result<PointCloud> {
    if levels > pc.depth() {
        return Err(Error::Domain(format!(
            "cannot expand {levels} levels of a depth-{} cloud",
            pc.depth()
        )));
    }
    let step = 1u32 << levels;
    if let Some(p) = pc.points().iter().find(|p| p.iter().any(|c| c % step != 0)) {
        return Err(Error::Input(format!("point {p:?} is not aligned to step {step}")));
    }
    let mut out = Vec::with_capacity(pc.len() << (3 * levels));
    for &[x, y, z] in pc.points() {
        for dx in 0..step {
            for dy in 0..step {
                for dz in 0..step {
                    out.push([x + dx, y + dy, z + dz]);
                }
            }
        }
    }
    PointCloud::new(out, pc.depth())
}
