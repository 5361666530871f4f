//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `cargo test --test acceptance -- overfit table` runs only the criteria
//! whose names contain one of the given words.

mod common;

use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::Rng;

use common::*;
use voxrefine::codec::{decode_counts, encode_side_channel, octree_decode, octree_encode, quantize_decode, rate_point, SideChannel};
use voxrefine::experiment::{bd_against_raw, rd_sweep, select_sigma, Series};
use voxrefine::metrics::{bd_psnr, d1_mse, d1_psnr, RDCurve};
use voxrefine::net::*;
use voxrefine::partition::{combine, partition, CubeSize};
use voxrefine::ply::{read_ply, write_ply, PlyFormat};
use voxrefine::synth::{generate, make_training_set, pairs_for_cloud, Shape, SynthSpec};
use voxrefine::tensor::{bce_loss, AdamConfig};
use voxrefine::PointCloud;

const ROUND_TRIP_CASES: usize = 1000;
const ROUND_TRIP_BUDGET: Duration = Duration::from_secs(60);
const GRAD_BUDGET: Duration = Duration::from_secs(120);
const D1_PAIRS: usize = 200;
const D1_MAX_POINTS: usize = 2000;
const HAND_PSNR_DB: f64 = 64.97;
const HAND_PSNR_TOL: f64 = 0.01;
const BD_IDENTICAL_TOL: f64 = 1e-9;
const BD_SHIFT_TOL: f64 = 1e-6;
const BD_SYMMETRY_TOL: f64 = 1e-9;
const STRATEGY_CUBES: usize = 1000;
const OVERFIT_BCE: f64 = 0.01;
const OVERFIT_MAX_EPOCHS: usize = 1500;
const OVERFIT_BUDGET: Duration = Duration::from_secs(600);
const HELD_OUT_BUDGET: Duration = Duration::from_secs(1800);
const ABLATION_BAND_DB: f64 = 0.1;
const SIDE_CHANNEL_MAX_BPP: f64 = 0.01;
const SIDE_CHANNEL_MIN_POINTS: usize = 100_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn round_trips() -> Outcome {
    let t0 = Instant::now();
    let mut g = rng(1);
    let mut failures = Vec::new();
    for i in 0..ROUND_TRIP_CASES {
        let depth = g.random_range(1..=10);
        let pc = random_cloud(&mut g, depth, 300);
        let side = 1u32 << g.random_range(0..=depth.min(6));
        let size = CubeSize([side, 1 << g.random_range(0..=depth.min(6)), side]);
        let back = combine(&partition(&pc, size).unwrap(), depth).unwrap();
        if back != pc {
            failures.push(format!("partition case {i}"));
        }
        let format = if i % 2 == 0 { PlyFormat::Ascii } else { PlyFormat::BinaryLittleEndian };
        if read_ply(&write_ply(&pc, format)).unwrap() != pc {
            failures.push(format!("ply case {i}"));
        }
        if octree_decode(&octree_encode(&pc)).unwrap() != pc {
            failures.push(format!("octree case {i}"));
        }
        let counts: Vec<u64> = (0..g.random_range(0..200))
            .map(|_| match g.random_range(0..3) {
                0 => g.random_range(0..128),
                1 => g.random_range(0..1 << 18),
                _ => g.random(),
            })
            .collect();
        let side = encode_side_channel(&counts);
        let stream = SideChannel::from_bytes(&side.to_bytes()).unwrap();
        if decode_counts(&side.payload, counts.len()).unwrap() != counts || stream != side {
            failures.push(format!("side channel case {i}"));
        }
    }
    let t = t0.elapsed();
    outcome(
        failures.is_empty() && t < ROUND_TRIP_BUDGET,
        format!(
            "{ROUND_TRIP_CASES} x 4 identities, {} failures{}, {:.1}s",
            failures.len(),
            failures.first().map_or(String::new(), |f| format!(" (first: {f})")),
            t.as_secs_f64()
        ),
    )
}

fn gradients() -> Outcome {
    let t0 = Instant::now();
    let mut worst = (0.0f64, "none");
    let mut pass = true;
    for (name, rep) in op_grad_checks(2) {
        pass &= rep.max_rel_error < GRAD_TOL;
        if rep.max_rel_error >= worst.0 {
            worst = (rep.max_rel_error, name);
        }
    }
    let config = UNetConfig {
        base_channels: 2,
        ..UNetConfig::desk(16)
    };
    let net = unet_grad_check(config, 3);
    pass &= net.max_rel_error < GRAD_TOL;
    let t = t0.elapsed();
    let params = ModelWeights::<f64>::init(config).unwrap().scalar_count();
    outcome(
        pass && t < GRAD_BUDGET,
        format!(
            "worst op {} at {:.2e}; U-Net 16^3 base 2, levels {}, {} params at {:.2e}; tol {:.0e}, {:.1}s",
            worst.1,
            worst.0,
            config.levels,
            params,
            net.max_rel_error,
            GRAD_TOL,
            t.as_secs_f64()
        ),
    )
}

fn brute_mse(a: &PointCloud, b: &PointCloud) -> f64 {
    let sum: u128 = a
        .points()
        .iter()
        .map(|p| {
            b.points()
                .iter()
                .map(|q| (0..3).map(|i| (p[i] as i64 - q[i] as i64).pow(2) as u64).sum::<u64>())
                .min()
                .unwrap() as u128
        })
        .sum();
    sum as f64 / a.len() as f64
}

fn random_curve(g: &mut impl Rng, label: &str) -> RDCurve {
    let mut bpp = g.random_range(0.05..0.2);
    let mut psnr = g.random_range(40.0..50.0);
    let pts = (0..4)
        .map(|_| {
            bpp *= g.random_range(1.5..3.0);
            psnr += g.random_range(2.0..6.0);
            (bpp, psnr)
        })
        .collect();
    RDCurve::new(label, pts).unwrap()
}

fn metric_oracles() -> Outcome {
    let mut g = rng(4);
    let mut mismatches = 0;
    for _ in 0..D1_PAIRS {
        let depth = g.random_range(3..=10);
        let a = random_cloud(&mut g, depth, D1_MAX_POINTS);
        let b = random_cloud(&mut g, depth, D1_MAX_POINTS);
        if d1_mse(&a, &b).unwrap() != brute_mse(&a, &b) || d1_mse(&b, &a).unwrap() != brute_mse(&b, &a) {
            mismatches += 1;
        }
    }
    let a = PointCloud::new(vec![[0, 0, 0]], 10).unwrap();
    let b = PointCloud::new(vec![[1, 0, 0]], 10).unwrap();
    let hand = d1_psnr(&a, &b, 10).unwrap().psnr_db;

    let base = RDCurve::new("ref", vec![(0.1, 50.0), (0.2, 54.0), (0.4, 57.0), (0.8, 59.0)]).unwrap();
    let shifted = RDCurve::new("test", base.points().iter().map(|&(r, d)| (r, d + 2.0)).collect()).unwrap();
    let same = bd_psnr(&base, &base).unwrap().delta_db;
    let shift = bd_psnr(&base, &shifted).unwrap().delta_db;

    let mut sym_err = 0.0f64;
    let mut scale_err = 0.0f64;
    let mut cases = 0;
    while cases < 50 {
        let (r, t) = (random_curve(&mut g, "r"), random_curve(&mut g, "t"));
        let (Ok(ab), Ok(ba)) = (bd_psnr(&r, &t), bd_psnr(&t, &r)) else { continue };
        cases += 1;
        sym_err = sym_err.max((ab.delta_db + ba.delta_db).abs());
        let k = g.random_range(0.1..10.0);
        let scale = |c: &RDCurve| RDCurve::new("s", c.points().iter().map(|&(b, d)| (b * k, d)).collect()).unwrap();
        scale_err = scale_err.max((bd_psnr(&scale(&r), &scale(&t)).unwrap().delta_db - ab.delta_db).abs());
    }
    let pass = mismatches == 0
        && (hand - HAND_PSNR_DB).abs() <= HAND_PSNR_TOL
        && same.abs() <= BD_IDENTICAL_TOL
        && (shift - 2.0).abs() <= BD_SHIFT_TOL
        && sym_err <= BD_SYMMETRY_TOL
        && scale_err <= BD_SYMMETRY_TOL;
    outcome(
        pass,
        format!(
            "d1 mismatches {mismatches}/{D1_PAIRS}; hand {hand:.4} dB; bd same {same:.1e}, shift {shift:.9}; antisymmetry {sym_err:.1e}, scale {scale_err:.1e}"
        ),
    )
}

fn determination() -> Outcome {
    let mut g = rng(5);
    let levels = [0.0f32, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0];
    let mut oracle_failures = 0;
    for _ in 0..STRATEGY_CUBES {
        let side = g.random_range(1..=6);
        let n = (side * side * side) as usize;
        let probs: Vec<f32> = (0..n)
            .map(|_| if g.random_bool(0.5) { levels[g.random_range(0..levels.len())] } else { g.random() })
            .collect();
        let q = ProbabilityCube { index: [0, 0, 0], size: CubeSize::cubic(side), probs };
        let k = g.random_range(0..=n);
        let got: Vec<usize> = apply_adaptive_threshold(&q, k).unwrap().voxels.occupied().collect();
        let grid = voxrefine::partition::VoxelGrid::new(q.size);
        let mut all: Vec<usize> = (0..n).collect();
        all.sort_by(|&a, &b| q.probs[b].total_cmp(&q.probs[a]).then(grid.coord(a).cmp(&grid.coord(b))));
        let mut want = all[..k].to_vec();
        want.sort_unstable();
        if got != want {
            oracle_failures += 1;
        }
    }

    let gt = generate(&SynthSpec::new(Shape::Torus, 6).seed(9)).unwrap();
    let dec = quantize_decode(&gt, 4).unwrap();
    let config = UNetConfig { base_channels: 2, ..UNetConfig::desk(16) };
    let weights = ModelWeights::init(config).unwrap();
    let counts = side_channel_counts(&dec, &gt, config.cube_size).unwrap();
    let out = refine(&dec, &weights, Strategy::Adaptive(&counts)).unwrap();
    let total: u64 = counts.iter().sum();

    let boundary = ProbabilityCube {
        index: [0, 0, 0],
        size: CubeSize::cubic(2),
        probs: vec![0.97, 0.98, 0.981, 0.0, 1.0, 0.5, 0.98, 0.9801],
    };
    let picked: Vec<usize> = apply_fixed_threshold(&boundary, 0.98).voxels.occupied().collect();
    let strict = picked == [2, 4, 7];
    outcome(
        oracle_failures == 0 && out.len() as u64 == total && strict,
        format!(
            "top-k oracle mismatches {oracle_failures}/{STRATEGY_CUBES}; refined {} points for sum of counts {total}; fixed 0.98 keeps {picked:?}",
            out.len()
        ),
    )
}

fn overfit() -> Outcome {
    let t0 = Instant::now();
    let size = CubeSize::cubic(32);
    let gt = generate(
        &SynthSpec::new(Shape::Sphere, 8)
            .with("radius", 11.0)
            .with("cx", 16.0)
            .with("cy", 16.0)
            .with("cz", 16.0),
    )
    .unwrap();
    let dec = quantize_decode(&gt, 6).unwrap();
    let pairs = pairs_for_cloud(&gt, &[6], size).unwrap();
    let config = UNetConfig { base_channels: 8, ..UNetConfig::desk(32) };
    let tc = TrainConfig { epochs: OVERFIT_MAX_EPOCHS, batch_size: 1, adam: AdamConfig { lr: 1e-3, ..AdamConfig::default() }, seed: 1 };
    let counts = side_channel_counts(&dec, &gt, size).unwrap();
    let mut weights = ModelWeights::init(config).unwrap();
    let mut result = (f64::INFINITY, usize::MAX, 0);
    train_with(&mut weights, &pairs, &tc, |m, s| {
        if s.mean_loss >= OVERFIT_BCE {
            return true;
        }
        let bce: f64 = pairs
            .iter()
            .map(|(x, y)| bce_loss(&m.forward(&m.cube_tensor(x).unwrap()).unwrap(), &m.cube_tensor(y).unwrap()).unwrap())
            .sum::<f64>()
            / pairs.len() as f64;
        let out = refine(&dec, m, Strategy::Adaptive(&counts)).unwrap();
        let wrong = out.len().abs_diff(gt.len()) + out.points().iter().filter(|p| !gt.contains(p)).count();
        result = (bce, wrong, s.epoch + 1);
        !(bce < OVERFIT_BCE && wrong == 0)
    })
    .unwrap();
    let t = t0.elapsed();
    let (bce, wrong, epochs) = result;
    outcome(
        bce < OVERFIT_BCE && wrong == 0 && t < OVERFIT_BUDGET,
        format!(
            "{} gt points from {} coded; BCE {bce:.5} after {epochs} epochs, {wrong} voxels differ under AT, {:.1}s",
            gt.len(),
            dec.len(),
            t.as_secs_f64()
        ),
    )
}

const HELD_OUT_DEPTH: u32 = 8;
const HELD_OUT_CODED: [u32; 3] = [7, 6, 5];
const HELD_OUT_CUBE: u32 = 32;
const HELD_OUT_BASE: usize = 4;
const HELD_OUT_EPOCHS: usize = 16;
const HELD_OUT_BATCH: usize = 4;

fn sigma_candidates() -> Vec<f64> {
    (1..20).map(|i| i as f64 * 0.05).collect()
}

fn train_specs() -> Vec<SynthSpec> {
    vec![
        SynthSpec::new(Shape::Sphere, HELD_OUT_DEPTH).seed(21),
        SynthSpec::new(Shape::Sphere, HELD_OUT_DEPTH).with("radius", 60.0).with("jitter", 6.0).seed(22),
        SynthSpec::new(Shape::BoxFrame, HELD_OUT_DEPTH).seed(23),
    ]
}

fn test_specs() -> Vec<SynthSpec> {
    vec![
        SynthSpec::new(Shape::Torus, HELD_OUT_DEPTH).seed(31),
        SynthSpec::new(Shape::FractalSurface, HELD_OUT_DEPTH).seed(32),
    ]
}

struct HeldOut {
    /// Mean BD-PSNR against raw over the test shapes, per series.
    on: Vec<(Series, f64)>,
    off_ft: f64,
    sigma_on: f64,
    sigma_off: f64,
    elapsed: Duration,
}

fn held_out_model(multiscale: bool, pairs: &[TrainingPair], train_clouds: &[PointCloud]) -> (ModelWeights, f64) {
    let config = UNetConfig { multiscale, seed: 7, base_channels: HELD_OUT_BASE, ..UNetConfig::desk(HELD_OUT_CUBE) };
    let tc = TrainConfig {
        epochs: HELD_OUT_EPOCHS,
        batch_size: HELD_OUT_BATCH,
        adam: AdamConfig { lr: 1e-3, ..AdamConfig::default() },
        seed: 8,
    };
    let (weights, _) = train(pairs, config, &tc).unwrap();
    let sigma = select_sigma(&weights, train_clouds, &HELD_OUT_CODED, &sigma_candidates()).unwrap();
    (weights, sigma)
}

fn mean_bd(weights: &ModelWeights, sigma: f64, tests: &[PointCloud]) -> Vec<(Series, f64)> {
    let mut sums: Vec<(Series, f64)> = Vec::new();
    for gt in tests {
        let rows = rd_sweep(gt, Some(weights), &HELD_OUT_CODED, sigma).unwrap();
        for (s, v) in bd_against_raw(&rows).unwrap() {
            match sums.iter_mut().find(|(k, _)| *k == s) {
                Some(e) => e.1 += v / tests.len() as f64,
                None => sums.push((s, v / tests.len() as f64)),
            }
        }
    }
    sums
}

fn held_out() -> &'static HeldOut {
    static CELL: OnceLock<HeldOut> = OnceLock::new();
    CELL.get_or_init(|| {
        let t0 = Instant::now();
        let size = CubeSize::cubic(HELD_OUT_CUBE);
        let specs = train_specs();
        let pairs = make_training_set(&specs, HELD_OUT_DEPTH, &HELD_OUT_CODED, size).unwrap();
        let train_clouds: Vec<PointCloud> = specs.iter().map(|s| generate(s).unwrap()).collect();
        let tests: Vec<PointCloud> = test_specs().iter().map(|s| generate(s).unwrap()).collect();
        let (w_on, sigma_on) = held_out_model(true, &pairs, &train_clouds);
        let on = mean_bd(&w_on, sigma_on, &tests);
        let (w_off, sigma_off) = held_out_model(false, &pairs, &train_clouds);
        let off_ft = mean_bd(&w_off, sigma_off, &tests)
            .into_iter()
            .find(|(s, _)| *s == Series::RefinedFt)
            .map_or(f64::NAN, |(_, v)| v);
        HeldOut { on, off_ft, sigma_on, sigma_off, elapsed: t0.elapsed() }
    })
}

fn series(h: &HeldOut, s: Series) -> f64 {
    h.on.iter().find(|(k, _)| *k == s).map_or(f64::NAN, |(_, v)| *v)
}

fn table_ordering() -> Outcome {
    let h = held_out();
    let (nni, ft, at) = (series(h, Series::Nni), series(h, Series::RefinedFt), series(h, Series::RefinedAt));
    let pass = at > ft && ft > nni && nni > 0.0 && h.elapsed < HELD_OUT_BUDGET;
    outcome(
        pass,
        format!(
            "BD-PSNR vs raw: NNI {nni:.2} dB, FT {ft:.2} dB (sigma {}), AT {at:.2} dB; {:.0}s including the ablation model",
            h.sigma_on,
            h.elapsed.as_secs_f64()
        ),
    )
}

fn ablation() -> Outcome {
    let h = held_out();
    let on = series(h, Series::RefinedFt);
    let direction = if on > h.off_ft + ABLATION_BAND_DB {
        "multiscale ahead"
    } else if on < h.off_ft - ABLATION_BAND_DB {
        "single head ahead"
    } else {
        "within noise band"
    };
    outcome(
        on >= h.off_ft - ABLATION_BAND_DB,
        format!(
            "FT BD-PSNR multiscale on {on:.2} dB (sigma {}), off {:.2} dB (sigma {}): {direction}",
            h.sigma_on, h.off_ft, h.sigma_off
        ),
    )
}

fn side_channel_cost() -> Outcome {
    let gt = generate(&SynthSpec::new(Shape::Sphere, 10).with("radius", 100.0).seed(41)).unwrap();
    let size = CubeSize::cubic(64);
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for d in [9, 8, 7] {
        let (dec, _) = rate_point(&gt, d).unwrap();
        let side = build_side_channel(&dec, &gt, size).unwrap();
        let bpp = side.stream_bits() as f64 / gt.len() as f64;
        worst = worst.max(bpp);
        parts.push(format!("depth {d}: {} bits", side.stream_bits()));
    }
    outcome(
        gt.len() >= SIDE_CHANNEL_MIN_POINTS && worst <= SIDE_CHANNEL_MAX_BPP,
        format!("{} points, worst {worst:.5} bpp ({})", gt.len(), parts.join(", ")),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("round-trips", round_trips),
        ("gradients", gradients),
        ("metric-oracles", metric_oracles),
        ("determination", determination),
        ("overfit", overfit),
        ("table-ordering", table_ordering),
        ("ablation", ablation),
        ("side-channel", side_channel_cost),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let o = run();
        failed += usize::from(!o.pass);
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("{failed} criteria failed");
    // a report by default; ACCEPTANCE_STRICT=1 turns failures into a failing exit
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
