//! Option resolution: `key=value` config file first, command-line flags on
//! top, everything echoed to a log next to the outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use voxrefine::net::UNetConfig;
use voxrefine::Error;

#[derive(Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self, Error> {
        let mut s = Settings::default();
        let Some(path) = path else { return Ok(s) };
        let text = std::fs::read_to_string(path)?;
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            let start = offset;
            offset += line.len();
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (k, v) = body.split_once('=').ok_or_else(|| Error::Parse {
                offset: start,
                message: format!("{}: expected key=value", path.display()),
            })?;
            s.values.insert(k.trim().replace('-', "_"), v.trim().to_string());
        }
        Ok(s)
    }

    /// Flags win over the config file.
    pub fn flag(&mut self, key: &str, value: Option<impl ToString>) {
        if let Some(v) = value {
            self.values.insert(key.to_string(), v.to_string());
        }
    }

    pub fn or_default(&mut self, key: &str, value: impl ToString) {
        self.values.entry(key.to_string()).or_insert_with(|| value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, Error> {
        self.get(key)
            .map(|v| v.parse().map_err(|_| Error::Schema(format!("invalid value '{v}' for {key}"))))
            .transpose()
    }

    pub fn require<T: std::str::FromStr>(&self, key: &str) -> Result<T, Error> {
        self.parsed(key)?
            .ok_or_else(|| Error::Input(format!("missing required option {key}")))
    }

    pub fn depths(&self) -> Result<Option<Vec<u32>>, Error> {
        self.get("depths").map(parse_depths).transpose()
    }

    /// Model architecture from the resolved options, for keys that are set.
    pub fn model_config(&self, base: UNetConfig) -> Result<UNetConfig, Error> {
        let mut c = base;
        for key in ["cube_size", "levels", "base_channels", "kernel", "multiscale", "seed"] {
            if let Some(v) = self.get(key) {
                c.set(key, v)?;
            }
        }
        if self.get("levels").is_none() && self.get("cube_size").is_some() {
            let side = c.cube_size.0.into_iter().min().unwrap_or(1);
            c.levels = voxrefine::net::levels_for(side);
        }
        c.validate()?;
        Ok(c)
    }

    /// Writes every resolved option to `<out>.log`.
    pub fn write_log(&self, command: &str, out: &Path) -> Result<PathBuf, Error> {
        let mut log = format!("command={command}\nversion={}\n", env!("CARGO_PKG_VERSION"));
        for (k, v) in &self.values {
            log.push_str(&format!("{k}={v}\n"));
        }
        let mut name = out.as_os_str().to_owned();
        name.push(".log");
        let path = PathBuf::from(name);
        std::fs::write(&path, log)?;
        Ok(path)
    }
}

pub fn parse_depths(text: &str) -> Result<Vec<u32>, Error> {
    let depths: Vec<u32> = text
        .split(',')
        .map(|d| d.trim().parse().map_err(|_| Error::Schema(format!("invalid depth list '{text}'"))))
        .collect::<Result<_, _>>()?;
    if depths.is_empty() {
        return Err(Error::Input("depth list is empty".into()));
    }
    Ok(depths)
}
