use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::partition::CubeSize;

/// Architecture of the refinement U-Net.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UNetConfig {
    pub cube_size: CubeSize,
    /// Number of stride-2 encoder blocks.
    pub levels: u32,
    /// Channel count at full resolution; level `i` carries `base << i`.
    pub base_channels: usize,
    pub kernel: usize,
    /// Coarse-to-fine summation of per-scale heads. Off leaves a single
    /// full-resolution head.
    pub multiscale: bool,
    pub seed: u64,
}

impl Default for UNetConfig {
    fn default() -> Self {
        UNetConfig {
            cube_size: CubeSize::default(),
            levels: 4,
            base_channels: 16,
            kernel: 3,
            multiscale: true,
            seed: 0,
        }
    }
}

/// Deepest level count that still leaves a feature map of side 2 for a
/// cube of side `side`, capped at four.
pub fn levels_for(side: u32) -> u32 {
    let log = side.max(1).ilog2();
    log.saturating_sub(1).clamp(1, 4)
}

impl UNetConfig {
    /// Desk-scale configuration for a cubic block.
    pub fn desk(side: u32) -> Self {
        UNetConfig {
            cube_size: CubeSize::cubic(side),
            levels: levels_for(side),
            base_channels: 8,
            ..UNetConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::Input("levels must be at least 1".into()));
        }
        if self.base_channels == 0 {
            return Err(Error::Input("base_channels must be at least 1".into()));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::Input(format!("kernel must be odd, got {}", self.kernel)));
        }
        if self.levels > 16 {
            return Err(Error::Input(format!("levels {} is too deep", self.levels)));
        }
        let step = 1u32 << self.levels;
        for side in self.cube_size.0 {
            if side == 0 || side % step != 0 {
                return Err(Error::Input(format!(
                    "cube size {:?} is not divisible by 2^{} = {step}",
                    self.cube_size.0, self.levels
                )));
            }
        }
        Ok(())
    }

    pub fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    /// `key=value` lines, one per field.
    pub fn to_text(&self) -> String {
        let [l, w, h] = self.cube_size.0;
        let mut s = String::new();
        writeln!(s, "cube_size={l}x{w}x{h}").unwrap();
        writeln!(s, "levels={}", self.levels).unwrap();
        writeln!(s, "base_channels={}", self.base_channels).unwrap();
        writeln!(s, "kernel={}", self.kernel).unwrap();
        writeln!(s, "multiscale={}", if self.multiscale { "on" } else { "off" }).unwrap();
        writeln!(s, "seed={}", self.seed).unwrap();
        s
    }

    /// Parses [`UNetConfig::to_text`] output. Missing keys keep defaults and
    /// unknown keys are rejected.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut config = UNetConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Schema(format!("config line {} has no '='", n + 1)))?;
            config.set(key.trim(), value.trim())?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::Schema(format!("invalid value '{value}' for {key}"));
        match key {
            "cube_size" => self.cube_size = parse_cube_size(value)?,
            "levels" => self.levels = value.parse().map_err(|_| bad())?,
            "base_channels" => self.base_channels = value.parse().map_err(|_| bad())?,
            "kernel" => self.kernel = value.parse().map_err(|_| bad())?,
            "multiscale" => self.multiscale = parse_switch(value).ok_or_else(bad)?,
            "seed" => self.seed = value.parse().map_err(|_| bad())?,
            _ => return Err(Error::Schema(format!("unknown model key '{key}'"))),
        }
        Ok(())
    }
}

pub fn parse_switch(value: &str) -> Option<bool> {
    match value {
        "on" | "true" | "1" => Some(true),
        "off" | "false" | "0" => Some(false),
        _ => None,
    }
}

/// Accepts `32` or `32x32x16`.
pub fn parse_cube_size(value: &str) -> Result<CubeSize> {
    let bad = || Error::Schema(format!("invalid cube size '{value}'"));
    let parts: Vec<u32> = value
        .split('x')
        .map(|p| p.trim().parse().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    match parts[..] {
        [s] => Ok(CubeSize::cubic(s)),
        [l, w, h] => Ok(CubeSize([l, w, h])),
        _ => Err(bad()),
    }
}
