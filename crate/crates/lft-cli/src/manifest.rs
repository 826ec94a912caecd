//! Run manifests: every subcommand writes one next to each output artifact,
//! recording the fully resolved configuration so the artifact can be
//! reproduced by re-running from the manifest alone.

use anyhow::Result;
use serde::Serialize;
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub resolved: Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: u64,
    pub tool_version: String,
    pub duration_secs: f64,
}

pub struct ManifestBuilder {
    subcommand: String,
    resolved: Value,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    seed: u64,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(subcommand: &str, resolved: Value, seed: u64) -> Self {
        ManifestBuilder {
            subcommand: subcommand.to_string(),
            resolved,
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed,
            started: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.inputs.push(path.to_path_buf());
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.to_path_buf());
        self
    }

    /// Write the manifest beside every output artifact: `manifest.json`
    /// inside output directories, `<name>.manifest.json` beside files.
    pub fn write(self) -> Result<()> {
        let manifest = RunManifest {
            subcommand: self.subcommand,
            resolved: self.resolved,
            inputs: self.inputs,
            outputs: self.outputs.clone(),
            seed: self.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            duration_secs: self.started.elapsed().as_secs_f64(),
        };
        let bytes = serde_json::to_vec_pretty(&manifest)?;
        for out in &self.outputs {
            let path = if out.is_dir() {
                out.join("manifest.json")
            } else {
                let name = out
                    .file_name()
                    .map(|n| format!("{}.manifest.json", n.to_string_lossy()))
                    .unwrap_or_else(|| "manifest.json".to_string());
                out.with_file_name(name)
            };
            lft_core::util::atomic_write(&path, &bytes)?;
        }
        Ok(())
    }
}
