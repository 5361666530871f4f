//! Bjontegaard delta PSNR.
//!
//! Each curve's PSNR is fitted by least squares as a polynomial in
//! `log10(bpp)`, of degree three or `points - 1` when fewer than four points
//! are available. The fitted difference is integrated in closed form over
//! the shared log-rate interval and divided by its width.

use super::rd::RDCurve;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BdPsnr {
    /// Average PSNR gain of the test curve, in dB.
    pub delta_db: f64,
    pub reference_degree: usize,
    pub test_degree: usize,
    /// Shared `log10(bpp)` interval.
    pub overlap: (f64, f64),
}

/// Polynomial in `(x - center) / scale`, coefficients lowest order first.
struct Fit {
    center: f64,
    scale: f64,
    coeffs: Vec<f64>,
}

impl Fit {
    fn new(curve: &RDCurve) -> Result<Self> {
        let n = curve.len();
        if n < 2 {
            return Err(Error::Input(format!(
                "curve '{}' needs at least 2 points, has {n}",
                curve.label
            )));
        }
        let xs: Vec<f64> = curve.points().iter().map(|p| p.0.log10()).collect();
        let ys: Vec<f64> = curve.points().iter().map(|p| p.1).collect();
        let center = xs.iter().sum::<f64>() / n as f64;
        let scale = xs.iter().map(|x| (x - center).abs()).fold(0.0, f64::max);
        let ts: Vec<f64> = xs.iter().map(|x| (x - center) / scale).collect();
        let degree = (n - 1).min(3);
        let m = degree + 1;
        // normal equations of the Vandermonde system
        let mut a = vec![vec![0.0; m + 1]; m];
        for (t, y) in ts.iter().zip(&ys) {
            let powers: Vec<f64> = (0..m).map(|k| t.powi(k as i32)).collect();
            for r in 0..m {
                for c in 0..m {
                    a[r][c] += powers[r] * powers[c];
                }
                a[r][m] += powers[r] * y;
            }
        }
        let coeffs = solve(a).ok_or_else(|| {
            Error::Domain(format!("curve '{}' gives a singular fit", curve.label))
        })?;
        Ok(Fit {
            center,
            scale,
            coeffs,
        })
    }

    fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Closed-form integral over `x` in `[lo, hi]`.
    fn integral(&self, lo: f64, hi: f64) -> f64 {
        let anti = |x: f64| {
            let t = (x - self.center) / self.scale;
            self.coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c * t.powi(k as i32 + 1) / (k + 1) as f64)
                .sum::<f64>()
        };
        self.scale * (anti(hi) - anti(lo))
    }
}

/// Gaussian elimination with partial pivoting on an augmented matrix.
fn solve(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let m = a.len();
    for col in 0..m {
        let pivot = (col..m).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        for row in col + 1..m {
            let f = a[row][col] / a[col][col];
            for k in col..=m {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    let mut x = vec![0.0; m];
    for row in (0..m).rev() {
        let s: f64 = (row + 1..m).map(|k| a[row][k] * x[k]).sum();
        x[row] = (a[row][m] - s) / a[row][row];
    }
    Some(x)
}

/// Average PSNR difference `test - reference` over the shared rate range;
/// positive means the test curve is better.
pub fn bd_psnr(reference: &RDCurve, test: &RDCurve) -> Result<BdPsnr> {
    let fr = Fit::new(reference)?;
    let ft = Fit::new(test)?;
    let range = |c: &RDCurve| {
        let p = c.points();
        (p[0].0.log10(), p[p.len() - 1].0.log10())
    };
    let (rlo, rhi) = range(reference);
    let (tlo, thi) = range(test);
    let lo = rlo.max(tlo);
    let hi = rhi.min(thi);
    if hi <= lo {
        return Err(Error::Domain(format!(
            "curves '{}' and '{}' share no rate interval",
            reference.label, test.label
        )));
    }
    Ok(BdPsnr {
        delta_db: (ft.integral(lo, hi) - fr.integral(lo, hi)) / (hi - lo),
        reference_degree: fr.degree(),
        test_degree: ft.degree(),
        overlap: (lo, hi),
    })
}
