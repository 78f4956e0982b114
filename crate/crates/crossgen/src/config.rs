//! Line-oriented `key = value` config files and option resolution.
//!
//! Precedence is CLI flag > config file > built-in default, with the
//! `CROSSGEN_SEED` environment variable slotting in as a default-seed
//! fallback below both. Unknown keys are rejected rather than ignored, so a
//! typo in a committed config cannot silently fall back to a default.
//! Every run writes its fully resolved settings back out as a snapshot next
//! to its artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const DEFAULT_SEED: u64 = 42;
pub const SEED_ENV_VAR: &str = "CROSSGEN_SEED";

/// Every key a config file may set. Flags not listed here (e.g. `--resume`)
/// are operational and CLI-only.
pub const KNOWN_KEYS: &[&str] = &[
    "seed",
    "epochs",
    "batch_size",
    "latent_dim",
    "lr_aivae",
    "lr_gan",
    "alpha",
    "generator_loss_mode",
    "out",
    "data",
    "mnist",
    "fsdd",
    "scd",
    "model",
    "classifier",
    "mask_sweep",
    "use_mean",
];

/// A parsed config file: validated keys, raw string values.
#[derive(Clone, Debug, Default)]
pub struct FileConfig {
    map: BTreeMap<String, String>,
}

pub fn parse_config_text(text: &str, origin: &Path) -> Result<FileConfig> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::parse(origin, format!("line {}: expected `key = value`, got {raw:?}", lineno + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::parse(
                origin,
                format!("line {}: unknown key {key:?}", lineno + 1),
            ));
        }
        if map.insert(key.to_string(), value.to_string()).is_some() {
            return Err(Error::parse(
                origin,
                format!("line {}: duplicate key {key:?}", lineno + 1),
            ));
        }
    }
    Ok(FileConfig { map })
}

pub fn load_config_file(path: &Path) -> Result<FileConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_text(&text, path)
}

impl FileConfig {
    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|_| {
                Error::invalid(format!("config key {key:?} has unparsable value {raw:?}"))
            }),
        }
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>> {
        self.get(key)
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>> {
        self.get(key)
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
    }

    pub fn bool(&self, key: &str) -> Result<Option<bool>> {
        self.get(key)
    }

    pub fn string(&self, key: &str) -> Option<String> {
        self.map.get(key).cloned()
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.map.get(key).map(PathBuf::from)
    }

    /// `alpha` accepts a whitespace- or comma-separated list.
    pub fn alphas(&self) -> Result<Option<Vec<f64>>> {
        let Some(raw) = self.map.get("alpha") else { return Ok(None) };
        let vals: Result<Vec<f64>> = raw
            .split([' ', ',', '\t'])
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::invalid(format!("config key \"alpha\" has unparsable entry {s:?}")))
            })
            .collect();
        let vals = vals?;
        if vals.is_empty() {
            return Err(Error::invalid("config key \"alpha\" is empty"));
        }
        Ok(Some(vals))
    }
}

/// CLI > file > default.
pub fn resolve<T>(cli: Option<T>, file: Option<T>, default: T) -> T {
    cli.or(file).unwrap_or(default)
}

/// CLI > file > environment > built-in default.
pub fn resolve_seed(cli: Option<u64>, file: Option<u64>, env: Option<u64>) -> u64 {
    cli.or(file).or(env).unwrap_or(DEFAULT_SEED)
}

/// Reads and parses the `CROSSGEN_SEED` fallback, erroring on garbage
/// rather than silently using the default.
pub fn seed_from_env() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV_VAR) {
        Err(_) => Ok(None),
        Ok(raw) => raw.parse().map(Some).map_err(|_| {
            Error::invalid(format!("{SEED_ENV_VAR} is set to unparsable value {raw:?}"))
        }),
    }
}

/// Renders resolved settings as snapshot text, one `key = value` line each,
/// in the order given.
pub fn snapshot_text(pairs: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (key, value) in pairs {
        out.push_str(key);
        out.push_str(" = ");
        out.push_str(value);
        out.push('\n');
    }
    out
}

/// Writes the snapshot beside a run's other artifacts.
pub fn write_snapshot(dir: &Path, pairs: &[(&str, String)]) -> Result<String> {
    let text = snapshot_text(pairs);
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("config.txt");
    fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
    Ok(text)
}
