//! Flat `key = value` configuration files.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored.
//! Keys use the same kebab-case spelling as the long command-line flags and
//! always lose to an explicitly given flag: precedence is flags > file >
//! built-in defaults.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use anyhow::{bail, Context, Result};

/// Bundled study configurations, selectable with `simulate --preset <name>`.
/// Each is an ordinary key-value file compiled into the binary.
pub const PRESETS: &[(&str, &str)] = &[
    (
        "tables_toeplitz_gmv",
        include_str!("../presets/tables_toeplitz_gmv.cfg"),
    ),
    (
        "tables_toeplitz_markowitz",
        include_str!("../presets/tables_toeplitz_markowitz.cfg"),
    ),
    (
        "tables_factor_gmv",
        include_str!("../presets/tables_factor_gmv.cfg"),
    ),
    (
        "tables_factor_markowitz",
        include_str!("../presets/tables_factor_markowitz.cfg"),
    ),
];

/// A parsed key-value file. Commands `take` the keys they understand and
/// then call [`KvConfig::finish`], which rejects anything left over so a
/// typo in a key never passes silently.
#[derive(Debug)]
pub struct KvConfig {
    values: BTreeMap<String, String>,
    origin: String,
}

impl KvConfig {
    /// A config with no assignments; `take` always returns `None`.
    pub fn empty() -> Self {
        Self {
            values: BTreeMap::new(),
            origin: "<none>".to_owned(),
        }
    }

    /// Parses the flat format. `origin` names the source in diagnostics.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').with_context(|| {
                format!(
                    "{origin} line {}: expected `key = value`, got {raw:?}",
                    idx + 1
                )
            })?;
            let key = key.trim().to_owned();
            let value = value.trim().to_owned();
            if key.is_empty() || value.is_empty() {
                bail!("{origin} line {}: empty key or value in {raw:?}", idx + 1);
            }
            if values.insert(key.clone(), value).is_some() {
                bail!("{origin} line {}: duplicate key {key:?}", idx + 1);
            }
        }
        Ok(Self {
            values,
            origin: origin.to_owned(),
        })
    }

    /// Loads a bundled preset by name.
    pub fn preset(name: &str) -> Result<Self> {
        let text = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .with_context(|| {
                let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
                format!("unknown preset {name:?} (available: {})", known.join(", "))
            })?;
        Self::parse(text, &format!("preset {name}"))
    }

    /// Loads a user-supplied config file.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Removes and returns the raw value for `key`, if present.
    pub fn take(&mut self, key: &str) -> Option<String> {
        self.values.remove(key)
    }

    /// Like [`KvConfig::take`] but parses the value, naming the key and the
    /// file in the error.
    pub fn take_parsed<T>(&mut self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.values.remove(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| anyhow::anyhow!("{}: key {key:?}: {e}", self.origin)),
        }
    }

    /// Errors on any key no command claimed.
    pub fn finish(self) -> Result<()> {
        if self.values.is_empty() {
            return Ok(());
        }
        let stray: Vec<String> = self.values.keys().cloned().collect();
        bail!("{}: unknown key(s): {}", self.origin, stray.join(", "));
    }
}

/// Splits a comma-separated list, trimming blanks.
pub fn split_list(raw: &str) -> Vec<String> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect()
}
