//! Run manifests: every command writes a `manifest.json` next to its
//! outputs recording the resolved configuration, input digests and
//! timestamps, so a run can be audited and reproduced exactly.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// SHA-256 of one input file, recorded at read time.
#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// The sidecar written alongside every output set.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    /// Subcommand that produced the outputs.
    pub command: &'static str,
    pub artifact: &'static str,
    pub version: &'static str,
    /// RFC 3339 UTC timestamps; the only non-reproducible fields.
    pub started: String,
    pub finished: Option<String>,
    /// Root seed, for commands that consume randomness.
    pub seed: Option<u64>,
    /// Worker-thread cap, when one was requested.
    pub jobs: Option<usize>,
    pub inputs: Vec<InputDigest>,
    /// Fully resolved configuration after flag/file/default merging.
    pub config: serde_json::Value,
    /// File names written to the output directory, manifest excluded.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn begin(command: &'static str, seed: Option<u64>, jobs: Option<usize>) -> Self {
        Self {
            command,
            artifact: "spaceport",
            version: env!("CARGO_PKG_VERSION"),
            started: now(),
            finished: None,
            seed,
            jobs,
            inputs: Vec::new(),
            config: serde_json::Value::Null,
            outputs: Vec::new(),
        }
    }

    /// Hashes `path` and records it as an input.
    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let bytes =
            fs::read(path).with_context(|| format!("cannot read input {}", path.display()))?;
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    /// Stores the resolved configuration.
    pub fn set_config<T: Serialize>(&mut self, config: &T) -> Result<()> {
        self.config = serde_json::to_value(config).context("cannot serialize config")?;
        Ok(())
    }

    /// Records an output file name (relative to the output directory).
    pub fn record_output(&mut self, name: &str) {
        self.outputs.push(name.to_owned());
    }

    /// Stamps the end time and writes `manifest.json` into `dir`.
    pub fn write(mut self, dir: &Path) -> Result<()> {
        self.finished = Some(now());
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&self).context("cannot serialize manifest")?;
        fs::write(&path, text + "\n")
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Lowercase hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for byte in digest {
        use std::fmt::Write;
        let _ = write!(out, "{byte:02x}");
    }
    out
}

/// Creates the output directory (and parents) if needed and rejects paths
/// that exist but are not directories.
pub fn ensure_out_dir(dir: &Path) -> Result<()> {
    if dir.exists() && !dir.is_dir() {
        anyhow::bail!(
            "output path {} exists and is not a directory",
            dir.display()
        );
    }
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    Ok(())
}
