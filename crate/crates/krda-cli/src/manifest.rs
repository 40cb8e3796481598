//! Run manifests: every command writes one next to its primary output
//! (`<out>.manifest.json`) with the fully resolved configuration, input
//! digests, output list, and timings. Re-running the command with the
//! manifest as `--config` reproduces the outputs byte for byte.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Serialize)]
pub struct RunManifest<C: Serialize> {
    pub command: &'static str,
    pub version: &'static str,
    pub seed: Option<u64>,
    pub config: C,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    pub timings_ms: Timings,
}

#[derive(Serialize)]
pub struct Timings {
    pub total: u64,
}

pub struct ManifestBuilder {
    started: Instant,
    command: &'static str,
    seed: Option<u64>,
    inputs: Vec<InputDigest>,
    outputs: Vec<PathBuf>,
}

impl ManifestBuilder {
    pub fn new(command: &'static str) -> Self {
        Self {
            started: Instant::now(),
            command,
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seed = Some(seed);
        self
    }

    pub fn input(&mut self, path: &Path) -> Result<&mut Self> {
        let bytes = std::fs::read(path)
            .with_context(|| format!("digesting input {}", path.display()))?;
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: hex_string(&hasher.finalize()),
        });
        Ok(self)
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.to_path_buf());
        self
    }

    /// Write `<primary_out>.manifest.json`.
    pub fn write<C: Serialize>(&self, primary_out: &Path, config: &C) -> Result<()> {
        let manifest = RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            seed: self.seed,
            config,
            inputs: self
                .inputs
                .iter()
                .map(|i| InputDigest {
                    path: i.path.clone(),
                    sha256: i.sha256.clone(),
                })
                .collect(),
            outputs: self
                .outputs
                .iter()
                .map(|p| p.display().to_string())
                .collect(),
            timings_ms: Timings {
                total: self.started.elapsed().as_millis() as u64,
            },
        };
        let path = manifest_path(primary_out);
        let text = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(&path, text)
            .with_context(|| format!("writing manifest {}", path.display()))?;
        Ok(())
    }
}

pub fn manifest_path(primary_out: &Path) -> PathBuf {
    let mut name = primary_out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    primary_out.with_file_name(name)
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
