//! Deterministic synthetic surface clouds.
//!
//! Curved shapes are thin shells `|f(p)| <= thickness` around an implicit
//! surface `f = 0`, optionally roughened by seeded value noise. Shells are
//! rasterized by recursive block culling: a block is skipped once
//! `|f(center)|` exceeds what any voxel inside it could reach.

use std::collections::BTreeMap;
use std::fmt;

use crate::cloud::{check_depth, Point, PointCloud};
use crate::codec::quantize_decode;
use crate::error::{Error, Result};
use crate::net::TrainingPair;
use crate::partition::{partition, CubeSize, OccupancyCube};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shape {
    Sphere,
    Torus,
    BoxFrame,
    FractalSurface,
}

impl Shape {
    pub fn name(self) -> &'static str {
        match self {
            Shape::Sphere => "sphere",
            Shape::Torus => "torus",
            Shape::BoxFrame => "box-frame",
            Shape::FractalSurface => "fractal-noise-surface",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sphere" => Some(Shape::Sphere),
            "torus" => Some(Shape::Torus),
            "box-frame" => Some(Shape::BoxFrame),
            "fractal-noise-surface" | "fractal" => Some(Shape::FractalSurface),
            _ => None,
        }
    }

    fn keys(self) -> &'static [&'static str] {
        const SHELL: [&str; 3] = ["jitter", "jitter_scale", "thickness"];
        match self {
            Shape::Sphere => &["cx", "cy", "cz", "radius", SHELL[0], SHELL[1], SHELL[2]],
            Shape::Torus => &["cx", "cy", "cz", "major", "minor", SHELL[0], SHELL[1], SHELL[2]],
            Shape::BoxFrame => &["x0", "y0", "z0", "sx", "sy", "sz"],
            Shape::FractalSurface => &["base", "amplitude", "scale", "octaves", "margin", SHELL[2]],
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub shape: Shape,
    pub depth: u32,
    /// Shape parameters; absent keys take size-relative defaults.
    pub params: BTreeMap<String, f64>,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(shape: Shape, depth: u32) -> Self {
        SynthSpec {
            shape,
            depth,
            params: BTreeMap::new(),
            seed: 0,
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn get(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    /// One spec-file line: `shape key=value ...`.
    pub fn to_line(&self) -> String {
        let mut s = format!("{} depth={} seed={}", self.shape, self.depth, self.seed);
        for (k, v) in &self.params {
            s.push_str(&format!(" {k}={v}"));
        }
        s
    }
}

/// Parses a spec file: one generator per line, blank lines and `#`
/// comments ignored.
pub fn parse_spec_file(text: &str) -> Result<Vec<SynthSpec>> {
    let mut specs = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut words = body.split_whitespace();
        let name = words.next().unwrap();
        let shape = Shape::parse(name)
            .ok_or_else(|| Error::parse(start, format!("unknown shape '{name}'")))?;
        let mut spec = SynthSpec::new(shape, 8);
        for word in words {
            let (k, v) = word
                .split_once('=')
                .ok_or_else(|| Error::parse(start, format!("expected key=value, got '{word}'")))?;
            let bad = || Error::parse(start, format!("invalid value for {k}: '{v}'"));
            match k {
                "depth" => spec.depth = v.parse().map_err(|_| bad())?,
                "seed" => spec.seed = v.parse().map_err(|_| bad())?,
                _ if shape.keys().contains(&k) => {
                    let x: f64 = v.parse().map_err(|_| bad())?;
                    if !x.is_finite() {
                        return Err(bad());
                    }
                    spec.params.insert(k.to_string(), x);
                }
                _ => return Err(Error::parse(start, format!("{shape} has no parameter '{k}'"))),
            }
        }
        specs.push(spec);
    }
    Ok(specs)
}

fn hash(seed: u64, c: [i64; 3]) -> u64 {
    // splitmix64 over the lattice coordinate
    let mut z = seed
        ^ (c[0] as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (c[1] as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ (c[2] as u64).wrapping_mul(0x1656_67B1_9E37_79F9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

/// Trilinear value noise in `[-1, 1]` with quintic fade, unit lattice.
fn value_noise(seed: u64, p: [f64; 3]) -> f64 {
    let base = p.map(|v| v.floor());
    let f: [f64; 3] = std::array::from_fn(|i| fade(p[i] - base[i]));
    let b = base.map(|v| v as i64);
    let mut acc = 0.0;
    for corner in 0..8 {
        let o = [corner >> 2 & 1, corner >> 1 & 1, corner & 1];
        let v = (hash(seed, std::array::from_fn(|i| b[i] + o[i] as i64)) >> 11) as f64
            / (1u64 << 53) as f64
            * 2.0
            - 1.0;
        let w: f64 = (0..3).map(|i| if o[i] == 1 { f[i] } else { 1.0 - f[i] }).product();
        acc += w * v;
    }
    acc
}

/// Largest slope of [`value_noise`] along any direction.
const NOISE_LIPSCHITZ: f64 = 1.875 * 2.0 * 1.733;

fn fbm(seed: u64, p: [f64; 3], octaves: u32) -> f64 {
    let mut sum = 0.0;
    let mut amp = 0.5;
    let mut freq = 1.0;
    for o in 0..octaves {
        sum += amp * value_noise(seed.wrapping_add(u64::from(o)), p.map(|v| v * freq));
        amp *= 0.5;
        freq *= 2.0;
    }
    sum
}

/// Voxels with `|f| <= thickness` inside `[lo, hi)`; `lipschitz` bounds the
/// slope of `f`.
fn rasterize_shell(
    f: &dyn Fn([f64; 3]) -> f64,
    lipschitz: f64,
    thickness: f64,
    lo: [i64; 3],
    hi: [i64; 3],
    out: &mut Vec<Point>,
) {
    let ext: [i64; 3] = std::array::from_fn(|i| hi[i] - lo[i]);
    if ext.iter().any(|&e| e <= 0) {
        return;
    }
    if ext.iter().all(|&e| e == 1) {
        let p = lo.map(|v| v as f64);
        if f(p).abs() <= thickness {
            out.push(lo.map(|v| v as u32));
        }
        return;
    }
    let center: [f64; 3] = std::array::from_fn(|i| (lo[i] + hi[i] - 1) as f64 / 2.0);
    let half_diag = ext.iter().map(|&e| ((e - 1) as f64 / 2.0).powi(2)).sum::<f64>().sqrt();
    if f(center).abs() > thickness + lipschitz * half_diag {
        return;
    }
    let axis = (0..3).max_by_key(|&i| ext[i]).unwrap();
    let mid = lo[axis] + ext[axis] / 2;
    let mut hi_a = hi;
    hi_a[axis] = mid;
    let mut lo_b = lo;
    lo_b[axis] = mid;
    rasterize_shell(f, lipschitz, thickness, lo, hi_a, out);
    rasterize_shell(f, lipschitz, thickness, lo_b, hi, out);
}

fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Input(msg()))
    }
}

/// Generates the cloud described by `spec`.
pub fn generate(spec: &SynthSpec) -> Result<PointCloud> {
    check_depth(spec.depth)?;
    let side = (1u64 << spec.depth) as f64;
    let mid = side / 2.0;
    let full = [0i64; 3];
    let top = [side as i64; 3];
    let thickness = spec.get("thickness", 0.87);
    require(thickness > 0.0, || format!("thickness must be positive, got {thickness}"))?;
    let jitter = spec.get("jitter", 0.0);
    let jitter_scale = spec.get("jitter_scale", 8.0);
    require(jitter >= 0.0 && jitter_scale > 0.0, || "jitter and jitter_scale must be non-negative and positive".into())?;
    let seed = spec.seed;
    let rough = move |p: [f64; 3]| {
        if jitter == 0.0 {
            0.0
        } else {
            jitter * value_noise(seed, p.map(|v| v / jitter_scale))
        }
    };
    let rough_lip = jitter * NOISE_LIPSCHITZ / jitter_scale;
    let center = [spec.get("cx", mid), spec.get("cy", mid), spec.get("cz", mid)];

    let mut points = Vec::new();
    match spec.shape {
        Shape::Sphere => {
            let r = spec.get("radius", side * 0.35);
            require(r > 0.0, || format!("sphere radius must be positive, got {r}"))?;
            let f = |p: [f64; 3]| {
                let d = (0..3).map(|i| (p[i] - center[i]).powi(2)).sum::<f64>().sqrt();
                d - r - rough(p)
            };
            rasterize_shell(&f, 1.0 + rough_lip, thickness, full, top, &mut points);
        }
        Shape::Torus => {
            let major = spec.get("major", side * 0.3);
            let minor = spec.get("minor", side * 0.1);
            require(major > 0.0 && minor > 0.0, || format!("torus radii must be positive, got {major} and {minor}"))?;
            let f = |p: [f64; 3]| {
                let q = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
                let ring = (q[0] * q[0] + q[1] * q[1]).sqrt() - major;
                (ring * ring + q[2] * q[2]).sqrt() - minor - rough(p)
            };
            rasterize_shell(&f, 1.0 + rough_lip, thickness, full, top, &mut points);
        }
        Shape::BoxFrame => {
            let origin = [spec.get("x0", side / 4.0), spec.get("y0", side / 4.0), spec.get("z0", side / 4.0)];
            let size = [spec.get("sx", side / 2.0), spec.get("sy", side / 2.0), spec.get("sz", side / 2.0)];
            require(
                size.iter().all(|&s| s >= 2.0 && s.fract() == 0.0) && origin.iter().all(|&o| o >= 0.0 && o.fract() == 0.0),
                || format!("box frame needs integer origin and sides >= 2, got {origin:?} and {size:?}"),
            )?;
            let o = origin.map(|v| v as u32);
            let s = size.map(|v| v as u32);
            for x in 0..s[0] {
                for y in 0..s[1] {
                    for z in 0..s[2] {
                        let on_edge = [x, y, z]
                            .iter()
                            .zip(&s)
                            .filter(|(&c, &n)| c == 0 || c == n - 1)
                            .count()
                            >= 2;
                        if on_edge {
                            points.push([o[0] + x, o[1] + y, o[2] + z]);
                        }
                    }
                }
            }
            if points.iter().flatten().any(|&c| f64::from(c) >= side) {
                return Err(Error::Input(format!("box frame exceeds the depth-{} grid", spec.depth)));
            }
        }
        Shape::FractalSurface => {
            let base = spec.get("base", mid);
            let amplitude = spec.get("amplitude", side / 8.0);
            let scale = spec.get("scale", side / 4.0);
            let octaves = spec.get("octaves", 4.0);
            let margin = spec.get("margin", 0.0);
            require(scale > 0.0 && amplitude >= 0.0, || "fractal surface needs positive scale".into())?;
            require((1.0..=12.0).contains(&octaves) && octaves.fract() == 0.0, || format!("octaves must be an integer in 1..=12, got {octaves}"))?;
            require(margin >= 0.0 && 2.0 * margin < side, || format!("margin {margin} leaves no surface"))?;
            let octaves = octaves as u32;
            let f = |p: [f64; 3]| {
                p[2] - base - amplitude * 2.0 * fbm(seed, [p[0] / scale, p[1] / scale, 0.5], octaves)
            };
            // each octave doubles frequency and halves amplitude, so slopes add up to `octaves` times the first
            let slope = amplitude * NOISE_LIPSCHITZ * f64::from(octaves) / scale;
            let m = margin as i64;
            rasterize_shell(&f, (1.0 + slope * slope).sqrt(), thickness, [m, m, 0], [top[0] - m, top[1] - m, top[2]], &mut points);
        }
    }
    if points.is_empty() {
        return Err(Error::Input(format!("'{}' produces no points", spec.to_line())));
    }
    PointCloud::new(points, spec.depth)
}

/// Number of voxels on the edges of an `sx x sy x sz` box frame.
pub fn box_frame_count(size: [u32; 3]) -> usize {
    4 * size.iter().map(|&s| s as usize).sum::<usize>() - 16
}

/// Pairs each non-empty cube of `decoded` with the ground-truth cube at the
/// same index, which is empty when the ground truth has no points there.
pub fn cube_pairs(gt: &PointCloud, decoded: &PointCloud, size: CubeSize) -> Result<Vec<TrainingPair>> {
    let mut truth: BTreeMap<_, _> = partition(gt, size)?.into_iter().map(|c| (c.index, c)).collect();
    Ok(partition(decoded, size)?
        .into_iter()
        .map(|c| {
            let t = truth.remove(&c.index).unwrap_or_else(|| OccupancyCube::empty(c.index, size));
            (c, t)
        })
        .collect())
}

/// Multi-rate training pairs: every ground-truth cloud coded at every depth.
pub fn pairs_for_cloud(gt: &PointCloud, coded_depths: &[u32], size: CubeSize) -> Result<Vec<TrainingPair>> {
    let mut pairs = Vec::new();
    for &d in coded_depths {
        pairs.extend(cube_pairs(gt, &quantize_decode(gt, d)?, size)?);
    }
    Ok(pairs)
}

pub fn make_training_set(
    specs: &[SynthSpec],
    gt_depth: u32,
    coded_depths: &[u32],
    size: CubeSize,
) -> Result<Vec<TrainingPair>> {
    let mut pairs = Vec::new();
    for spec in specs {
        let spec = SynthSpec { depth: gt_depth, ..spec.clone() };
        pairs.extend(pairs_for_cloud(&generate(&spec)?, coded_depths, size)?);
    }
    Ok(pairs)
}
