//! Point-to-point (D1) distortion.

use std::fmt::Write as _;

use rayon::prelude::*;

use super::kdtree::KdTree;
use crate::cloud::{Point, PointCloud};
use crate::error::{Error, Result};
use crate::parallel::pool;

/// Reported instead of infinity when both clouds coincide.
pub const PSNR_CAP_DB: f64 = 999.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct D1Result {
    pub mse_ab: f64,
    pub mse_ba: f64,
    pub psnr_db: f64,
}

fn non_empty(pc: &PointCloud, what: &str) -> Result<()> {
    if pc.is_empty() {
        Err(Error::Input(format!("{what} cloud is empty")))
    } else {
        Ok(())
    }
}

fn nearest_all(a: &PointCloud, b: &PointCloud) -> Result<Vec<u64>> {
    non_empty(a, "first")?;
    non_empty(b, "second")?;
    let tree = KdTree::new(b.points());
    Ok(pool().install(|| {
        a.points()
            .par_iter()
            .map(|p| tree.nearest_sq(p).expect("tree is non-empty"))
            .collect()
    }))
}

/// Mean over `a` of the squared distance to the nearest point of `b`.
pub fn d1_mse(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    let d = nearest_all(a, b)?;
    let sum: u128 = d.iter().map(|&v| u128::from(v)).sum();
    Ok(sum as f64 / d.len() as f64)
}

/// `10 log10(3 peak^2 / mse)`, capped at [`PSNR_CAP_DB`].
pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (3.0 * peak * peak / mse).log10()).min(PSNR_CAP_DB)
}

/// Symmetric D1 PSNR with peak `2^depth - 1`.
pub fn d1_psnr(a: &PointCloud, b: &PointCloud, depth: u32) -> Result<D1Result> {
    d1_psnr_with_peak(a, b, ((1u64 << depth) - 1) as f64)
}

pub fn d1_psnr_with_peak(a: &PointCloud, b: &PointCloud, peak: f64) -> Result<D1Result> {
    let mse_ab = d1_mse(a, b)?;
    let mse_ba = d1_mse(b, a)?;
    Ok(D1Result {
        mse_ab,
        mse_ba,
        psnr_db: psnr_from_mse(mse_ab.max(mse_ba), peak),
    })
}

/// Squared nearest-neighbour distance from each point of `a` into `b`,
/// in the canonical order of `a`.
pub fn per_point_errors(a: &PointCloud, b: &PointCloud) -> Result<Vec<(Point, u64)>> {
    let d = nearest_all(a, b)?;
    Ok(a.points().iter().copied().zip(d).collect())
}

pub fn errors_to_csv(errors: &[(Point, u64)]) -> String {
    let mut s = String::from("x,y,z,sq_err\n");
    for ([x, y, z], e) in errors {
        writeln!(s, "{x},{y},{z},{e}").unwrap();
    }
    s
}
