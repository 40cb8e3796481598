//! `krda transfer` - push every source row into the target domain.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use krda_core::data::{load_csv, save_csv};
use krda_core::model::KrdaModel;
use krda_core::transport::transfer_dataset;

use super::require;
use crate::config::{load_config, resolve_opt};
use crate::manifest::ManifestBuilder;

#[derive(Args)]
pub struct TransferArgs {
    /// Trained model JSON
    #[arg(long)]
    model: Option<PathBuf>,
    /// Source CSV (labels, when present, are carried through)
    #[arg(long)]
    source: Option<PathBuf>,
    /// Output CSV of transferred rows
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional JSON report (max residual, failures)
    #[arg(long)]
    report: Option<PathBuf>,
    /// Worker threads (default: all hardware parallelism)
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferConfig {
    pub model: Option<PathBuf>,
    pub source: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub workers: Option<usize>,
}

#[derive(Serialize)]
struct ReportDocument {
    n_rows: usize,
    n_cols: usize,
    max_residual: f64,
    mean_residual: f64,
    clip_epsilon: f64,
    n_failures: usize,
    failures: Vec<krda_core::transport::TransferFailure>,
}

pub fn run(args: TransferArgs) -> Result<()> {
    let cfg: TransferConfig = match &args.config {
        Some(path) => load_config(path)?,
        None => TransferConfig::default(),
    };
    let model_path = require(resolve_opt(args.model, cfg.model.clone()), "model")?;
    let source_path = require(resolve_opt(args.source, cfg.source.clone()), "source")?;
    let out = require(resolve_opt(args.out, cfg.out.clone()), "out")?;
    let report_path = resolve_opt(args.report, cfg.report.clone());
    let workers = resolve_opt(args.workers, cfg.workers);

    let mut manifest = ManifestBuilder::new("transfer");
    manifest.input(&model_path)?;
    manifest.input(&source_path)?;

    let model = KrdaModel::load(&model_path)
        .with_context(|| format!("loading model {}", model_path.display()))?;
    let source = load_csv(&source_path)
        .with_context(|| format!("loading {}", source_path.display()))?;

    let report = transfer_dataset(&model, &source, workers).context("transfer failed")?;
    let transferred = source
        .with_features(report.transferred.clone())
        .context("assembling transferred dataset")?;
    save_csv(&transferred, &out).with_context(|| format!("writing {}", out.display()))?;
    manifest.output(&out);

    if let Some(ref path) = report_path {
        let n_cells = (report.n_rows * report.n_cols).max(1);
        let doc = ReportDocument {
            n_rows: report.n_rows,
            n_cols: report.n_cols,
            max_residual: report.max_residual(),
            mean_residual: report.residuals.iter().sum::<f64>() / n_cells as f64,
            clip_epsilon: krda_core::mixture::Q_CLIP_EPSILON,
            n_failures: report.failures.len(),
            failures: report.failures.clone(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&doc)?)
            .with_context(|| format!("writing {}", path.display()))?;
        manifest.output(path);
    }

    let resolved = TransferConfig {
        model: Some(model_path),
        source: Some(source_path),
        out: Some(out.clone()),
        report: report_path,
        workers,
    };
    manifest.write(&out, &resolved)?;
    eprintln!(
        "transferred {} rows (max residual {:.3e}, {} failures)",
        report.n_rows,
        report.max_residual(),
        report.failures.len()
    );
    Ok(())
}
