//! Rate-distortion curves.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// `(bpp, psnr_db)` points sorted by strictly increasing rate.
#[derive(Debug, Clone, PartialEq)]
pub struct RDCurve {
    pub label: String,
    points: Vec<(f64, f64)>,
}

impl RDCurve {
    pub fn new(label: impl Into<String>, mut points: Vec<(f64, f64)>) -> Result<Self> {
        for &(bpp, psnr) in &points {
            if !(bpp.is_finite() && bpp > 0.0) {
                return Err(Error::Domain(format!("rate {bpp} must be positive and finite")));
            }
            if !psnr.is_finite() {
                return Err(Error::Domain(format!("PSNR {psnr} at rate {bpp} is not finite")));
            }
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let Some(w) = points.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Input(format!("duplicate rate {} in curve", w[0].0)));
        }
        Ok(RDCurve {
            label: label.into(),
            points,
        })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bpp,psnr_db\n");
        for (bpp, psnr) in &self.points {
            writeln!(s, "{bpp},{psnr}").unwrap();
        }
        s
    }

    /// Reads a `bpp,psnr_db` CSV with a header row.
    pub fn from_csv(label: impl Into<String>, text: &str) -> Result<Self> {
        let mut offset = 0;
        let mut points = Vec::new();
        for (n, line) in text.split_inclusive('\n').enumerate() {
            let start = offset;
            offset += line.len();
            let row = line.trim();
            if n == 0 {
                if row.replace(' ', "") != "bpp,psnr_db" {
                    return Err(Error::parse(start, "expected header 'bpp,psnr_db'"));
                }
                continue;
            }
            if row.is_empty() {
                continue;
            }
            let mut cells = row.split(',').map(str::trim);
            let parse = |cell: Option<&str>| -> Result<f64> {
                cell.and_then(|c| c.parse().ok())
                    .ok_or_else(|| Error::parse(start, format!("bad row '{row}'")))
            };
            let bpp = parse(cells.next())?;
            let psnr = parse(cells.next())?;
            if cells.next().is_some() {
                return Err(Error::parse(start, format!("extra column in '{row}'")));
            }
            points.push((bpp, psnr));
        }
        if text.is_empty() {
            return Err(Error::parse(0, "empty curve file"));
        }
        RDCurve::new(label, points)
    }
}
