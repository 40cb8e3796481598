//! `krda gen` - synthetic dataset generation.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use krda_core::data::{gen_gmm, gen_moons, save_csv, GmmMode, GmmSpec, MoonsSpec};

use super::{require, usage};
use crate::config::{load_config, resolve, resolve_opt};
use crate::manifest::ManifestBuilder;

#[derive(Args)]
pub struct GenArgs {
    /// Dataset kind: moons | gmm
    kind: Option<String>,
    /// Number of rows
    #[arg(long)]
    n: Option<usize>,
    /// Isotropic Gaussian noise added to the moons arcs
    #[arg(long)]
    noise: Option<f64>,
    /// Rotation of the moons task, degrees
    #[arg(long)]
    rotation: Option<f64>,
    /// Mixture modes for gmm: "w|m1,m2|v1,v2;w|..." (weights, mean,
    /// covariance diagonal per mode)
    #[arg(long)]
    modes: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON config supplying any of the above
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Default, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub kind: Option<String>,
    pub n: Option<usize>,
    pub noise: Option<f64>,
    pub rotation: Option<f64>,
    pub modes: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

pub fn parse_modes(text: &str) -> Result<Vec<GmmMode>> {
    let mut modes = Vec::new();
    for part in text.split(';') {
        let fields: Vec<&str> = part.split('|').collect();
        if fields.len() != 3 {
            return Err(usage(format!(
                "--modes: expected \"w|m1,..|v1,..\" per mode, got {part:?}"
            )));
        }
        let weight: f64 = fields[0]
            .trim()
            .parse()
            .map_err(|_| usage(format!("--modes: bad weight {:?}", fields[0])))?;
        let mean = super::parse_list::<f64>(fields[1], "modes")?;
        let cov_diag = super::parse_list::<f64>(fields[2], "modes")?;
        modes.push(GmmMode {
            weight,
            mean,
            cov_diag,
        });
    }
    Ok(modes)
}

pub fn run(args: GenArgs) -> Result<()> {
    let cfg: GenConfig = match &args.config {
        Some(path) => load_config(path)?,
        None => GenConfig::default(),
    };
    let kind = require(resolve_opt(args.kind, cfg.kind.clone()), "kind")?;
    let n = resolve(args.n, cfg.n, 1000);
    let seed = resolve(args.seed, cfg.seed, 0);
    let out = require(resolve_opt(args.out, cfg.out.clone()), "out")?;

    let mut manifest = ManifestBuilder::new("gen");
    manifest.seed(seed);

    let (dataset, resolved) = match kind.as_str() {
        "moons" => {
            let spec = MoonsSpec {
                n,
                noise_std: resolve(args.noise, cfg.noise, 0.1),
                rotation_deg: resolve(args.rotation, cfg.rotation, 0.0),
                seed,
            };
            let resolved = GenConfig {
                kind: Some("moons".into()),
                n: Some(spec.n),
                noise: Some(spec.noise_std),
                rotation: Some(spec.rotation_deg),
                modes: None,
                seed: Some(seed),
                out: Some(out.clone()),
            };
            (gen_moons(&spec), resolved)
        }
        "gmm" => {
            let modes_text = require(resolve_opt(args.modes, cfg.modes.clone()), "modes")?;
            let spec = GmmSpec {
                modes: parse_modes(&modes_text)?,
                n,
                seed,
            };
            let resolved = GenConfig {
                kind: Some("gmm".into()),
                n: Some(n),
                noise: None,
                rotation: None,
                modes: Some(modes_text),
                seed: Some(seed),
                out: Some(out.clone()),
            };
            (
                gen_gmm(&spec).context("generating gmm dataset")?,
                resolved,
            )
        }
        other => return Err(usage(format!("unknown dataset kind {other:?}"))),
    };

    save_csv(&dataset, &out).with_context(|| format!("writing {}", out.display()))?;
    manifest.output(&out);
    manifest.write(&out, &resolved)?;
    eprintln!("wrote {} rows to {}", dataset.n_rows(), out.display());
    Ok(())
}
