//! `krda eval` - train the classifier on a labeled CSV and score it on
//! held-out labeled data.

use std::path::PathBuf;

use anyhow::{anyhow, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use krda_core::data::load_csv;
use krda_core::svm::{svm_fit, Gamma};

use super::{require, usage};
use crate::config::{load_config, resolve, resolve_opt};
use crate::manifest::ManifestBuilder;

#[derive(Args)]
pub struct EvalArgs {
    /// Labeled training CSV (e.g. the transferred source)
    #[arg(long)]
    train: Option<PathBuf>,
    /// Labeled test CSV
    #[arg(long)]
    test: Option<PathBuf>,
    /// Soft-margin penalty
    #[arg(long = "C")]
    c: Option<f64>,
    /// RBF bandwidth: "auto" or a positive number
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Accuracy report JSON (default: <test>.accuracy.json)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional trained-classifier dump (JSON)
    #[arg(long)]
    dump_model: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub c: Option<f64>,
    pub gamma: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub dump_model: Option<PathBuf>,
}

#[derive(Serialize)]
struct AccuracyReport {
    accuracy: f64,
    n_train: usize,
    n_test: usize,
    n_support: usize,
    c: f64,
    gamma: f64,
}

pub fn parse_gamma(text: &str) -> Result<Gamma> {
    if text.eq_ignore_ascii_case("auto") {
        Ok(Gamma::Auto)
    } else {
        let value: f64 = text
            .parse()
            .map_err(|_| usage(format!("--gamma: expected \"auto\" or a number, got {text:?}")))?;
        Ok(Gamma::Fixed(value))
    }
}

pub fn run(args: EvalArgs) -> Result<()> {
    let cfg: EvalConfig = match &args.config {
        Some(path) => load_config(path)?,
        None => EvalConfig::default(),
    };
    let train_path = require(resolve_opt(args.train, cfg.train.clone()), "train")?;
    let test_path = require(resolve_opt(args.test, cfg.test.clone()), "test")?;
    let c = resolve(args.c, cfg.c, 1.0);
    let gamma_text = resolve(args.gamma, cfg.gamma.clone(), "auto".to_string());
    let gamma = parse_gamma(&gamma_text)?;
    let seed = resolve(args.seed, cfg.seed, 0);
    let out = args.out.or(cfg.out.clone()).unwrap_or_else(|| {
        super::sibling(&test_path, ".accuracy.json")
    });
    let dump_model = resolve_opt(args.dump_model, cfg.dump_model.clone());

    let mut manifest = ManifestBuilder::new("eval");
    manifest.seed(seed);
    manifest.input(&train_path)?;
    manifest.input(&test_path)?;

    let train = load_csv(&train_path)
        .with_context(|| format!("loading {}", train_path.display()))?;
    let test =
        load_csv(&test_path).with_context(|| format!("loading {}", test_path.display()))?;
    if test.labels().is_none() {
        return Err(anyhow!(
            "test file {} has no label column",
            test_path.display()
        ));
    }

    let model = svm_fit(&train, c, gamma, seed).context("classifier training failed")?;
    let accuracy = model.accuracy(&test).context("scoring failed")?;

    let report = AccuracyReport {
        accuracy,
        n_train: train.n_rows(),
        n_test: test.n_rows(),
        n_support: model.n_support(),
        c,
        gamma: model.gamma,
    };
    std::fs::write(&out, serde_json::to_string_pretty(&report)?)
        .with_context(|| format!("writing {}", out.display()))?;
    manifest.output(&out);
    if let Some(ref path) = dump_model {
        std::fs::write(path, model.to_json()?)
            .with_context(|| format!("writing {}", path.display()))?;
        manifest.output(path);
    }

    let resolved = EvalConfig {
        train: Some(train_path),
        test: Some(test_path),
        c: Some(c),
        gamma: Some(gamma_text),
        seed: Some(seed),
        out: Some(out.clone()),
        dump_model,
    };
    manifest.write(&out, &resolved)?;
    println!("{accuracy}");
    Ok(())
}
