//! Learned geometry refinement for decompressed voxelized point clouds.
//!
//! The pipeline splits a decoded cloud into binary occupancy cubes, predicts
//! a per-voxel occupancy probability with a coarse-to-fine 3D U-Net, turns
//! probabilities back into voxels with either a fixed threshold or a
//! transmitted per-cube point count, and reassembles the cubes. The crate
//! also ships everything needed to evaluate that: a lossy octree codec
//! simulator, D1 PSNR, BD-PSNR and synthetic test clouds.

pub mod cloud;
pub mod codec;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod net;
pub mod parallel;
pub mod partition;
pub mod ply;
pub mod synth;
pub mod tensor;

pub use cloud::{Point, PointCloud};
pub use error::{Error, ErrorCategory, Result};

#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $file:literal) => {
            #[doc = include_str!(concat!("../../../book/src/", $file))]
            mod $name {}
        };
    }
    chapter!(clouds, "clouds.md");
    chapter!(cubes, "cubes.md");
    chapter!(network, "network.md");
    chapter!(determination, "determination.md");
    chapter!(metrics, "metrics.md");
    chapter!(training, "training.md");
    chapter!(cli, "cli.md");
}
