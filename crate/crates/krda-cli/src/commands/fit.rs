//! `krda fit` - joint density model training.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use krda_core::data::load_csv;
use krda_core::train::{fit_joint, metrics_to_csv, TrainConfig};

use super::{require, sibling};
use crate::config::{load_config, resolve, resolve_opt};
use crate::manifest::ManifestBuilder;

#[derive(Args)]
pub struct FitArgs {
    /// Source-domain training CSV
    #[arg(long)]
    source: Option<PathBuf>,
    /// Target-domain training CSV
    #[arg(long)]
    target: Option<PathBuf>,
    /// Mixture components per conditional factor
    #[arg(long)]
    components: Option<usize>,
    /// Hidden layer width
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Adam learning rate
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Fraction of rows held out per domain for early stopping
    #[arg(long)]
    val_fraction: Option<f64>,
    /// Non-improving validation epochs tolerated (0 disables)
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output model JSON path
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-epoch metrics CSV path (default: <out>.metrics.csv)
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub components: Option<usize>,
    pub hidden: Option<usize>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub val_fraction: Option<f64>,
    pub patience: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
}

pub fn run(args: FitArgs) -> Result<()> {
    let cfg: FitConfig = match &args.config {
        Some(path) => load_config(path)?,
        None => FitConfig::default(),
    };
    let source_path = require(resolve_opt(args.source, cfg.source.clone()), "source")?;
    let target_path = require(resolve_opt(args.target, cfg.target.clone()), "target")?;
    let out = require(resolve_opt(args.out, cfg.out.clone()), "out")?;
    let defaults = TrainConfig::default();
    let train = TrainConfig {
        epochs: resolve(args.epochs, cfg.epochs, defaults.epochs),
        batch_size: resolve(args.batch_size, cfg.batch_size, defaults.batch_size),
        learning_rate: resolve(args.lr, cfg.lr, defaults.learning_rate),
        seed: resolve(args.seed, cfg.seed, defaults.seed),
        validation_fraction: resolve(
            args.val_fraction,
            cfg.val_fraction,
            defaults.validation_fraction,
        ),
        patience: resolve(args.patience, cfg.patience, defaults.patience),
        ..defaults
    };
    let hidden = resolve(args.hidden, cfg.hidden, 50);
    let components = resolve(args.components, cfg.components, 5);
    let metrics_path = args
        .metrics
        .or(cfg.metrics.clone())
        .unwrap_or_else(|| sibling(&out, ".metrics.csv"));

    let mut manifest = ManifestBuilder::new("fit");
    manifest.seed(train.seed);
    manifest.input(&source_path)?;
    manifest.input(&target_path)?;

    let source = load_csv(&source_path)
        .with_context(|| format!("loading {}", source_path.display()))?;
    let target = load_csv(&target_path)
        .with_context(|| format!("loading {}", target_path.display()))?;

    let (model, metrics) = fit_joint(&source, &target, hidden, components, &train)
        .context("training failed")?;
    model
        .save(&out)
        .with_context(|| format!("writing {}", out.display()))?;
    std::fs::write(&metrics_path, metrics_to_csv(&metrics))
        .with_context(|| format!("writing {}", metrics_path.display()))?;

    let resolved = FitConfig {
        source: Some(source_path),
        target: Some(target_path),
        components: Some(components),
        hidden: Some(hidden),
        epochs: Some(train.epochs),
        lr: Some(train.learning_rate),
        batch_size: Some(train.batch_size),
        val_fraction: Some(train.validation_fraction),
        patience: Some(train.patience),
        seed: Some(train.seed),
        out: Some(out.clone()),
        metrics: Some(metrics_path.clone()),
    };
    manifest.output(&out).output(&metrics_path);
    manifest.write(&out, &resolved)?;

    if let Some(last) = metrics.last() {
        eprintln!(
            "fit: {} epochs, train ll source {:.4} target {:.4}; model at {}",
            metrics.len(),
            last.source_train_ll,
            last.target_train_ll,
            out.display()
        );
    }
    Ok(())
}
