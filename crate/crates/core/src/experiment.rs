//! Rate-distortion sweeps over the four reconstruction series.

use std::fmt::{self, Write as _};

use crate::cloud::PointCloud;
use crate::codec::{encode_side_channel, rate_point};
use crate::error::{Error, Result};
use crate::metrics::{bd_psnr, d1_psnr, RDCurve};
use crate::net::{determine, nni_upsample, predict_cubes, side_channel_counts, ModelWeights, Strategy};
use crate::partition::partition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Series {
    Raw,
    Nni,
    RefinedFt,
    RefinedAt,
}

impl Series {
    pub const ALL: [Series; 4] = [Series::Raw, Series::Nni, Series::RefinedFt, Series::RefinedAt];

    pub fn name(self) -> &'static str {
        match self {
            Series::Raw => "raw",
            Series::Nni => "nni",
            Series::RefinedFt => "refined-ft",
            Series::RefinedAt => "refined-at",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Series::ALL.into_iter().find(|x| x.name() == s)
    }
}

impl fmt::Display for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdRow {
    pub series: Series,
    pub target_depth: u32,
    pub bpp: f64,
    pub psnr_db: f64,
    /// Side-channel bits already included in `bpp`.
    pub side_channel_bits: u64,
}

/// D1 PSNR of a reconstruction, scoring an empty one at 0 dB.
fn score(gt: &PointCloud, rec: &PointCloud) -> Result<f64> {
    if rec.is_empty() {
        return Ok(0.0);
    }
    Ok(d1_psnr(gt, rec, gt.depth())?.psnr_db)
}

/// Codes `gt` at every depth and scores raw decoding, NNI and, when a model
/// is given, the fixed- and adaptive-threshold refinements.
pub fn rd_sweep(
    gt: &PointCloud,
    weights: Option<&ModelWeights>,
    depths: &[u32],
    sigma: f64,
) -> Result<Vec<RdRow>> {
    let mut rows = Vec::new();
    for &d in depths {
        let (dec, rate) = rate_point(gt, d)?;
        let row = |series, bpp, psnr_db, side_channel_bits| RdRow {
            series,
            target_depth: d,
            bpp,
            psnr_db,
            side_channel_bits,
        };
        rows.push(row(Series::Raw, rate.bpp, score(gt, &dec)?, 0));
        let nni = nni_upsample(&dec, gt.depth() - d)?;
        rows.push(row(Series::Nni, rate.bpp, score(gt, &nni)?, 0));
        if let Some(w) = weights {
            let size = w.config().cube_size;
            let probs = predict_cubes(w, &partition(&dec, size)?)?;
            let ft = determine(&probs, Strategy::Fixed(sigma), gt.depth())?;
            rows.push(row(Series::RefinedFt, rate.bpp, score(gt, &ft)?, 0));
            let counts = side_channel_counts(&dec, gt, size)?;
            let side = encode_side_channel(&counts);
            let at = determine(&probs, Strategy::Adaptive(&counts), gt.depth())?;
            let bits = rate.bits + side.stream_bits();
            rows.push(row(Series::RefinedAt, bits as f64 / gt.len() as f64, score(gt, &at)?, side.stream_bits()));
        }
    }
    Ok(rows)
}

pub fn rows_to_csv(rows: &[RdRow]) -> String {
    let mut s = String::from("series,target_depth,bpp,psnr_db,side_channel_bits\n");
    for r in rows {
        writeln!(s, "{},{},{},{},{}", r.series, r.target_depth, r.bpp, r.psnr_db, r.side_channel_bits).unwrap();
    }
    s
}

/// One curve per series present in `rows`, in [`Series::ALL`] order.
pub fn curves(rows: &[RdRow]) -> Result<Vec<(Series, RDCurve)>> {
    Series::ALL
        .into_iter()
        .filter(|s| rows.iter().any(|r| r.series == *s))
        .map(|s| {
            let pts = rows.iter().filter(|r| r.series == s).map(|r| (r.bpp, r.psnr_db)).collect();
            Ok((s, RDCurve::new(s.name(), pts)?))
        })
        .collect()
}

/// BD-PSNR of every series against the raw decoded curve.
pub fn bd_against_raw(rows: &[RdRow]) -> Result<Vec<(Series, f64)>> {
    let all = curves(rows)?;
    let raw = all
        .iter()
        .find(|(s, _)| *s == Series::Raw)
        .map(|(_, c)| c)
        .ok_or_else(|| Error::Input("sweep has no raw series".into()))?;
    all.iter().map(|(s, c)| Ok((*s, bd_psnr(raw, c)?.delta_db))).collect()
}

/// Picks the candidate threshold with the best mean fixed-threshold PSNR
/// over the given clouds and depths; ties keep the earlier candidate.
pub fn select_sigma(weights: &ModelWeights, clouds: &[PointCloud], depths: &[u32], candidates: &[f64]) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::Input("no threshold candidates".into()));
    }
    let size = weights.config().cube_size;
    let mut totals = vec![0.0; candidates.len()];
    for gt in clouds {
        for &d in depths {
            let (dec, _) = rate_point(gt, d)?;
            let probs = predict_cubes(weights, &partition(&dec, size)?)?;
            for (t, &sigma) in totals.iter_mut().zip(candidates) {
                *t += score(gt, &determine(&probs, Strategy::Fixed(sigma), gt.depth())?)?;
            }
        }
    }
    let best = (0..candidates.len())
        .fold(0, |b, i| if totals[i] > totals[b] { i } else { b });
    Ok(candidates[best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::UNetConfig;
    use crate::partition::CubeSize;
    use crate::synth::{generate, Shape, SynthSpec};

    #[test]
    fn sweep_shape_and_rate_accounting() {
        let gt = generate(&SynthSpec::new(Shape::Sphere, 6).with("radius", 20.0)).unwrap();
        let config = UNetConfig {
            cube_size: CubeSize::cubic(16),
            levels: 2,
            base_channels: 2,
            ..UNetConfig::default()
        };
        let w = ModelWeights::init(config).unwrap();
        let rows = rd_sweep(&gt, Some(&w), &[5, 4, 3], 0.5).unwrap();
        assert_eq!(rows.len(), 12);
        for d in [5, 4, 3] {
            let get = |s| rows.iter().find(|r| r.series == s && r.target_depth == d).unwrap();
            assert!(get(Series::RefinedAt).bpp > get(Series::RefinedFt).bpp);
            assert_eq!(get(Series::Raw).bpp, get(Series::Nni).bpp);
            assert!(get(Series::Nni).psnr_db > get(Series::Raw).psnr_db);
        }
        let gains = bd_against_raw(&rows).unwrap();
        assert_eq!(gains[0], (Series::Raw, 0.0));
        assert!(rows_to_csv(&rows).starts_with("series,target_depth,bpp,psnr_db,side_channel_bits\nraw,5,"));
    }

    #[test]
    fn raw_psnr_increases_with_depth() {
        let gt = generate(&SynthSpec::new(Shape::Sphere, 8).with("radius", 90.0)).unwrap();
        let psnr: Vec<f64> = (4..=8)
            .map(|d| {
                let (dec, _) = rate_point(&gt, d).unwrap();
                d1_psnr(&gt, &dec, 8).unwrap().psnr_db
            })
            .collect();
        assert!(psnr.windows(2).all(|w| w[0] < w[1]), "{psnr:?}");
    }
}
