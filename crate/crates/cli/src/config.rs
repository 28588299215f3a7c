//! Flat key/value experiment configuration.
//!
//! The on-disk form is one `key = value` pair per line, `#` comments, keys
//! namespaced with dots (`sampler.m`, `compressor.variant`, ...). The
//! canonical serialisation sorts keys, so a config round-trips losslessly
//! and hashes stably.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Raised for anything wrong with the configuration itself (exit code 2).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

type CfgResult<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentConfig {
    entries: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> CfgResult<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError(format!(
                    "line {}: expected `key = value`, found `{line}`",
                    i + 1
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError(format!("line {}: empty key or value", i + 1)));
            }
            entries.insert(key, value);
        }
        Ok(ExperimentConfig { entries })
    }

    pub fn load(path: &Path) -> CfgResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies one `key=value` override.
    pub fn set(&mut self, assignment: &str) -> CfgResult<()> {
        let Some((key, value)) = assignment.split_once('=') else {
            return Err(ConfigError(format!(
                "--set expects key=value, found `{assignment}`"
            )));
        };
        self.entries
            .insert(key.trim().to_string(), value.trim().to_string());
        Ok(())
    }

    /// Canonical text form (sorted keys); `parse` of this is the identity.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn hash(&self) -> u32 {
        crc32fast::hash(self.canonical().as_bytes())
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn get_str(&self, key: &str, default: &str) -> String {
        self.get(key).unwrap_or(default).to_string()
    }

    pub fn require(&self, key: &str) -> CfgResult<&str> {
        self.get(key)
            .ok_or_else(|| ConfigError(format!("missing required key `{key}`")))
    }

    pub fn get_usize(&self, key: &str, default: usize) -> CfgResult<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| ConfigError(format!("`{key}` must be an integer, got `{v}`"))),
        }
    }

    pub fn get_u64(&self, key: &str, default: u64) -> CfgResult<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| ConfigError(format!("`{key}` must be an integer, got `{v}`"))),
        }
    }

    pub fn get_f64(&self, key: &str, default: f64) -> CfgResult<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| ConfigError(format!("`{key}` must be a number, got `{v}`"))),
        }
    }

    /// Output directory: the `out` key, else `BSQZ_OUT`, else `./bsqz-out`.
    pub fn out_dir(&self) -> PathBuf {
        match self.get("out") {
            Some(p) => PathBuf::from(p),
            None => match std::env::var("BSQZ_OUT") {
                Ok(p) if !p.is_empty() => PathBuf::from(p),
                _ => PathBuf::from("bsqz-out"),
            },
        }
    }
}
