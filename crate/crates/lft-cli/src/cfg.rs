//! Flat key-value config files and flag/config/default precedence.
//!
//! A config file holds one `key = value` pair per line; `#` starts a
//! comment. Keys use the long flag names without the leading dashes, e.g.
//!
//! ```text
//! # defaults for toy runs
//! seed = 7
//! epochs = 20
//! eta = 1e-3
//! ```
//!
//! Precedence everywhere: explicit flag > config file > built-in default.

use anyhow::{bail, Context, Result};
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    values: HashMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(ConfigFile::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        let mut values = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!(
                    "{}:{}: expected `key = value`, found `{raw}`",
                    path.display(),
                    i + 1
                );
            };
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    /// Resolve one setting: the flag wins, then the config file, then the
    /// default.
    pub fn resolve<T: FromStr + Clone>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        if let Some(raw) = self.values.get(key) {
            return raw
                .parse::<T>()
                .map_err(|e| anyhow::anyhow!("config key `{key}`: {e}"));
        }
        Ok(default)
    }
}

/// Resolve an output path against the `LFT_OUT` root when it is relative.
pub fn resolve_out(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os("LFT_OUT") {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}
