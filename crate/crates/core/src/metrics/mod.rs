//! Geometry distortion and rate-distortion comparison.

pub mod bd;
pub mod d1;
pub mod kdtree;
pub mod rd;

pub use bd::{bd_psnr, BdPsnr};
pub use d1::{d1_mse, d1_psnr, d1_psnr_with_peak, errors_to_csv, per_point_errors, psnr_from_mse, D1Result, PSNR_CAP_DB};
pub use kdtree::KdTree;
pub use rd::RDCurve;
