mod settings;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use voxrefine::codec::{rate_point, SideChannel};
use voxrefine::experiment::{bd_against_raw, curves, rd_sweep, rows_to_csv};
use voxrefine::metrics::{bd_psnr, d1_psnr, errors_to_csv, per_point_errors, RDCurve};
use voxrefine::net::{build_side_channel, refine, train_with, ModelWeights, Strategy, TrainConfig, UNetConfig, DEFAULT_SIGMA};
use voxrefine::ply::{read_ply_with_depth, write_ply, PlyFormat};
use voxrefine::synth::{generate, pairs_for_cloud, parse_spec_file};
use voxrefine::tensor::AdamConfig;
use voxrefine::{Error, PointCloud};

use settings::Settings;

#[derive(Parser)]
#[command(name = "voxrefine", version, about = "Learned refinement of decompressed voxel point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Ascii,
    Binary,
}

impl From<Format> for PlyFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Ascii => PlyFormat::Ascii,
            Format::Binary => PlyFormat::BinaryLittleEndian,
        }
    }
}

#[derive(Args)]
struct Common {
    /// Plain-text `key=value` options; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ModelFlags {
    /// Cube side (`32`) or `LxWxH`.
    #[arg(long)]
    cube_size: Option<String>,
    #[arg(long)]
    levels: Option<u32>,
    #[arg(long)]
    base_channels: Option<usize>,
    #[arg(long, value_parser = ["on", "off"])]
    multiscale: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic clouds from a spec file.
    Synth {
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "binary")]
        format: Format,
        #[command(flatten)]
        common: Common,
    },
    /// Quantize a cloud to a lower depth and measure its rate.
    Compress {
        input: PathBuf,
        #[arg(long)]
        target_depth: u32,
        #[arg(long)]
        out: PathBuf,
        /// Rate CSV; defaults to `<out>.rate.csv`.
        #[arg(long)]
        rate: Option<PathBuf>,
        #[arg(long)]
        depth: Option<u32>,
        #[command(flatten)]
        common: Common,
    },
    /// Train a model on multi-rate pairs built from ground-truth clouds.
    Train {
        /// Ground-truth PLY files or glob patterns.
        #[arg(long = "gt", required = true, num_args = 1..)]
        gt: Vec<String>,
        /// Coded depths, e.g. `6,5,4`; defaults to one to three levels below each cloud.
        #[arg(long)]
        depths: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Loss CSV; defaults to `<out>.loss.csv`.
        #[arg(long)]
        loss: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Refine a decoded cloud with a trained model.
    Refine {
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// `fixed`, `fixed:<sigma>` or `adaptive`.
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        sigma: Option<f64>,
        /// Ground truth used to build the side channel.
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Side-channel stream to read instead of `--gt`.
        #[arg(long)]
        side_channel: Option<PathBuf>,
        /// Where to store the side channel built from `--gt`; defaults to `<out>.vcnt`.
        #[arg(long)]
        side_channel_out: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// D1 distortion between two clouds plus per-point errors.
    Eval {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        depth: Option<u32>,
        #[arg(long)]
        out: PathBuf,
        /// Per-point errors of `a` against `b`; defaults to `<out>.errors.csv`.
        #[arg(long)]
        errors: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Rate-distortion sweep over raw, NNI and both refinements.
    Rd {
        gt: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        depths: Option<String>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// BD-PSNR of a test curve against a reference curve.
    Bdpsnr {
        reference: PathBuf,
        test: PathBuf,
    },
}

fn read_cloud(path: &Path, depth: Option<u32>) -> Result<PointCloud, Error> {
    read_ply_with_depth(&fs::read(path)?, depth)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn settings(common: &Common) -> Result<Settings, Error> {
    let mut s = Settings::load(common.config.as_deref())?;
    s.flag("seed", common.seed);
    s.or_default("seed", 0);
    Ok(s)
}

fn model_flags(s: &mut Settings, m: &ModelFlags) {
    s.flag("cube_size", m.cube_size.as_ref());
    s.flag("levels", m.levels);
    s.flag("base_channels", m.base_channels);
    s.flag("multiscale", m.multiscale.as_ref());
}

fn expand_globs(patterns: &[String]) -> Result<Vec<PathBuf>, Error> {
    let mut paths = Vec::new();
    for p in patterns {
        let matches: Vec<PathBuf> = glob::glob(p)
            .map_err(|e| Error::Input(format!("bad glob '{p}': {e}")))?
            .filter_map(Result::ok)
            .collect();
        if matches.is_empty() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("no file matches '{p}'"),
            )));
        }
        paths.extend(matches);
    }
    paths.sort();
    paths.dedup();
    Ok(paths)
}

fn resolve_strategy(s: &Settings) -> Result<(bool, f64), Error> {
    let raw = s.get("strategy").unwrap_or("fixed");
    let (kind, inline) = match raw.split_once(':') {
        Some((k, v)) => (k, Some(v)),
        None => (raw, None),
    };
    let sigma = match inline {
        Some(v) => v.parse().map_err(|_| Error::Schema(format!("invalid sigma in '{raw}'")))?,
        None => s.parsed("sigma")?.unwrap_or(DEFAULT_SIGMA),
    };
    match kind {
        "fixed" => Ok((false, sigma)),
        "adaptive" => Ok((true, sigma)),
        other => Err(Error::Schema(format!("unknown strategy '{other}'"))),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Synth { spec, out, format, common } => {
            let mut s = settings(&common)?;
            s.flag("spec", Some(spec.display()));
            let seed: u64 = s.require("seed")?;
            let specs = parse_spec_file(&fs::read_to_string(&spec)?)?;
            if specs.is_empty() {
                return Err(Error::Input(format!("{} defines no shapes", spec.display())));
            }
            for (i, mut sp) in specs.into_iter().enumerate() {
                sp.seed = sp.seed.wrapping_add(seed);
                let pc = generate(&sp)?;
                let path = if i == 0 { out.clone() } else { numbered(&out, i) };
                fs::write(&path, write_ply(&pc, format.into()))?;
                println!("{}: {} points, depth {}", path.display(), pc.len(), pc.depth());
            }
            s.write_log("synth", &out)?;
        }
        Command::Compress { input, target_depth, out, rate, depth, common } => {
            let mut s = settings(&common)?;
            s.flag("input", Some(input.display()));
            s.flag("target_depth", Some(target_depth));
            let gt = read_cloud(&input, depth)?;
            let (dec, rp) = rate_point(&gt, target_depth)?;
            fs::write(&out, write_ply(&dec, PlyFormat::BinaryLittleEndian))?;
            let rate = rate.unwrap_or_else(|| with_suffix(&out, ".rate.csv"));
            fs::write(
                &rate,
                format!(
                    "target_depth,bits,bpp,points_gt,points_decoded\n{},{},{},{},{}\n",
                    rp.target_depth, rp.bits, rp.bpp, gt.len(), dec.len()
                ),
            )?;
            println!("{} points -> {} at {:.4} bpp", gt.len(), dec.len(), rp.bpp);
            s.write_log("compress", &out)?;
        }
        Command::Train { gt, depths, out, loss, epochs, batch_size, lr, model, common } => {
            let mut s = settings(&common)?;
            model_flags(&mut s, &model);
            s.flag("depths", depths);
            s.flag("epochs", epochs);
            s.flag("batch_size", batch_size);
            s.flag("lr", lr);
            s.or_default("cube_size", 32);
            s.or_default("base_channels", 8);
            s.or_default("epochs", 10);
            s.or_default("batch_size", 64);
            s.or_default("lr", 1e-3);
            let config = s.model_config(UNetConfig::default())?;
            let paths = expand_globs(&gt)?;
            s.flag("gt", Some(paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(",")));
            let fixed_depths = s.depths()?;
            let mut pairs = Vec::new();
            for path in &paths {
                let cloud = read_cloud(path, None)?;
                let ds = match &fixed_depths {
                    Some(d) => d.clone(),
                    None => (1..=3).filter_map(|k| cloud.depth().checked_sub(k)).filter(|&d| d >= 1).collect(),
                };
                pairs.extend(pairs_for_cloud(&cloud, &ds, config.cube_size)?);
            }
            let tc = TrainConfig {
                epochs: s.require("epochs")?,
                batch_size: s.require("batch_size")?,
                adam: AdamConfig { lr: s.require("lr")?, ..AdamConfig::default() },
                seed: config.seed,
            };
            println!("training on {} cube pairs, {} parameters", pairs.len(), ModelWeights::<f32>::init(config)?.scalar_count());
            let mut weights = ModelWeights::init(config)?;
            let history = train_with(&mut weights, &pairs, &tc, |_, st| {
                println!("epoch {} loss {:.6}", st.epoch, st.mean_loss);
                true
            })?;
            fs::write(&out, weights.to_checkpoint())?;
            let mut csv = String::from("epoch,mean_loss\n");
            for (i, l) in history.iter().enumerate() {
                csv.push_str(&format!("{i},{l}\n"));
            }
            fs::write(loss.unwrap_or_else(|| with_suffix(&out, ".loss.csv")), csv)?;
            s.write_log("train", &out)?;
        }
        Command::Refine { input, model, strategy, sigma, gt, side_channel, side_channel_out, out, common } => {
            let mut s = settings(&common)?;
            s.flag("strategy", strategy);
            s.flag("sigma", sigma);
            s.flag("input", Some(input.display()));
            s.flag("model", Some(model.display()));
            let (adaptive, sigma) = resolve_strategy(&s)?;
            let dec = read_cloud(&input, None)?;
            let weights = ModelWeights::from_checkpoint(&fs::read(&model)?)?;
            let refined = if adaptive {
                let side = match (&side_channel, &gt) {
                    (Some(path), _) => SideChannel::from_bytes(&fs::read(path)?)?,
                    (None, Some(gt_path)) => {
                        let gt = read_cloud(gt_path, Some(dec.depth()))?;
                        let side = build_side_channel(&dec, &gt, weights.config().cube_size)?;
                        let path = side_channel_out.clone().unwrap_or_else(|| with_suffix(&out, ".vcnt"));
                        fs::write(&path, side.to_bytes())?;
                        println!("side channel: {} bits -> {}", side.stream_bits(), path.display());
                        side
                    }
                    (None, None) => {
                        return Err(Error::Input(
                            "adaptive strategy needs --gt or --side-channel to know per-cube point counts".into(),
                        ))
                    }
                };
                refine(&dec, &weights, Strategy::Adaptive(&side.counts))?
            } else {
                refine(&dec, &weights, Strategy::Fixed(sigma))?
            };
            fs::write(&out, write_ply(&refined, PlyFormat::BinaryLittleEndian))?;
            println!("{} points -> {} points", dec.len(), refined.len());
            s.write_log("refine", &out)?;
        }
        Command::Eval { a, b, depth, out, errors, common } => {
            let mut s = settings(&common)?;
            s.flag("a", Some(a.display()));
            s.flag("b", Some(b.display()));
            let ca = read_cloud(&a, depth)?;
            let cb = read_cloud(&b, Some(depth.unwrap_or(ca.depth())))?;
            let d = depth.unwrap_or(ca.depth().max(cb.depth()));
            s.flag("depth", Some(d));
            let r = d1_psnr(&ca, &cb, d)?;
            fs::write(&out, format!("mse_ab,mse_ba,psnr_db\n{},{},{}\n", r.mse_ab, r.mse_ba, r.psnr_db))?;
            let errors = errors.unwrap_or_else(|| with_suffix(&out, ".errors.csv"));
            fs::write(&errors, errors_to_csv(&per_point_errors(&ca, &cb)?))?;
            println!("D1 PSNR {:.4} dB (mse {:.6} / {:.6})", r.psnr_db, r.mse_ab, r.mse_ba);
            s.write_log("eval", &out)?;
        }
        Command::Rd { gt, model, depths, sigma, out, common } => {
            let mut s = settings(&common)?;
            s.flag("depths", depths);
            s.flag("sigma", sigma);
            s.flag("gt", Some(gt.display()));
            s.flag("model", model.as_ref().map(|m| m.display()));
            let cloud = read_cloud(&gt, None)?;
            let depths = match s.depths()? {
                Some(d) => d,
                None => (1..=3).filter_map(|k| cloud.depth().checked_sub(k)).filter(|&d| d >= 1).collect(),
            };
            let sigma = s.parsed("sigma")?.unwrap_or(DEFAULT_SIGMA);
            let weights = model.as_ref().map(|m| fs::read(m).map_err(Error::from).and_then(|b| ModelWeights::from_checkpoint(&b))).transpose()?;
            let rows = rd_sweep(&cloud, weights.as_ref(), &depths, sigma)?;
            fs::write(&out, rows_to_csv(&rows))?;
            for (series, curve) in curves(&rows)? {
                fs::write(with_suffix(&out, &format!(".{series}.csv")), curve.to_csv())?;
            }
            if depths.len() >= 2 {
                for (series, gain) in bd_against_raw(&rows)? {
                    println!("{series}: {gain:.2} dB BD-PSNR vs raw");
                }
            }
            s.write_log("rd", &out)?;
        }
        Command::Bdpsnr { reference, test } => {
            let r = RDCurve::from_csv("reference", &fs::read_to_string(&reference)?)?;
            let t = RDCurve::from_csv("test", &fs::read_to_string(&test)?)?;
            println!("{:.2}", bd_psnr(&r, &t)?.delta_db + 0.0);
        }
    }
    Ok(())
}

fn numbered(path: &Path, i: usize) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    path.with_file_name(format!("{stem}-{i}{ext}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("voxrefine: {e}");
            ExitCode::from(e.category().exit_code() as u8)
        }
    }
}
