//! End-to-end experiment harness: generate a shifted task, fit the
//! joint density model, transfer the source, train the classifier, and
//! score it on held-out target data.
//!
//! Seeds for every cell derive deterministically from one master seed,
//! so a whole results table is reproducible from a single integer.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{gen_gmm, gen_moons, subsample, Dataset, GmmMode, GmmSpec, MoonsSpec};
use crate::error::Result;
use crate::stats::{ks_two_sample, mean_ci95};
use crate::svm::{svm_fit, Gamma};
use crate::train::{derive_seed, fit_joint, TrainConfig};
use crate::transport::transfer_dataset;

/// Benchmark training protocol: fixed epoch budget on every provided
/// row (no validation split). At these sample sizes the held-out split
/// both starves the fit and makes the early-stop snapshot noisy.
pub fn bench_train_defaults() -> TrainConfig {
    TrainConfig {
        epochs: 1000,
        batch_size: 32,
        validation_fraction: 0.0,
        patience: 0,
        ..TrainConfig::default()
    }
}

/// Configuration for the rotated-moons benchmark ladder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MoonsSuiteConfig {
    pub angles: Vec<f64>,
    pub train_sizes: Vec<usize>,
    pub test_n: usize,
    pub repeats: usize,
    pub noise_std: f64,
    /// Fraction of each domain sampled per repeat.
    pub subsample_fraction: f64,
    pub hidden: usize,
    pub components: usize,
    /// Training template; the seed field is overridden per cell.
    pub train: TrainConfig,
    pub svm_c: f64,
    pub master_seed: u64,
}

impl Default for MoonsSuiteConfig {
    fn default() -> Self {
        Self {
            angles: vec![10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0],
            train_sizes: vec![300],
            test_n: 1000,
            repeats: 5,
            noise_std: 0.1,
            subsample_fraction: 0.9,
            hidden: 50,
            components: 5,
            train: bench_train_defaults(),
            svm_c: 1.0,
            master_seed: 2024,
        }
    }
}

/// Configuration for the Gaussian-mixture pushforward benchmark.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmSuiteConfig {
    pub source_modes: usize,
    pub target_modes: usize,
    pub n: usize,
    pub repeats: usize,
    pub hidden: usize,
    pub components: usize,
    /// Training template; the seed field is overridden per cell.
    pub train: TrainConfig,
    pub master_seed: u64,
}

impl Default for GmmSuiteConfig {
    fn default() -> Self {
        Self {
            source_modes: 2,
            target_modes: 3,
            n: 1000,
            repeats: 1,
            hidden: 50,
            components: 5,
            train: bench_train_defaults(),
            master_seed: 2024,
        }
    }
}

/// One benchmark measurement. Accuracy fields apply to the moons suite,
/// the KS fields to the gmm suite.
#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub suite: String,
    pub task: String,
    pub train_n: usize,
    pub repeat: usize,
    pub krda_accuracy: Option<f64>,
    pub source_only_accuracy: Option<f64>,
    pub ks_transferred: Option<f64>,
    pub ks_raw: Option<f64>,
    pub max_quantile_residual: f64,
    pub transfer_failures: usize,
}

/// Per-task aggregate with 95% confidence half-widths.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub suite: String,
    pub task: String,
    pub train_n: usize,
    pub repeats: usize,
    pub krda_mean: Option<f64>,
    pub krda_ci95: Option<f64>,
    pub source_only_mean: Option<f64>,
    pub source_only_ci95: Option<f64>,
    pub ks_transferred_mean: Option<f64>,
    pub ks_raw_mean: Option<f64>,
}

fn train_config(template: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        ..template.clone()
    }
}

/// Stable per-cell stream id for seed derivation.
fn cell_stream(task_key: u64, train_n: usize, repeat: usize, purpose: u64) -> u64 {
    task_key
        .wrapping_mul(1_000_003)
        .wrapping_add(train_n as u64)
        .wrapping_mul(64)
        .wrapping_add(repeat as u64 * 8)
        .wrapping_add(purpose)
}

/// Run one (angle, train size, repeat) moons cell: 90% subsample of each
/// domain, joint fit, transfer, then the classifier on the transferred
/// labeled source plus a raw-source baseline, both scored on held-out
/// target data.
pub fn run_moons_cell(
    cfg: &MoonsSuiteConfig,
    angle_deg: f64,
    train_n: usize,
    repeat: usize,
) -> Result<CellResult> {
    let task_key = (angle_deg * 100.0).round() as u64;
    let stream = |purpose: u64| derive_seed(cfg.master_seed, cell_stream(task_key, train_n, repeat, purpose));

    let source_full = gen_moons(&MoonsSpec {
        n: train_n,
        noise_std: cfg.noise_std,
        rotation_deg: 0.0,
        seed: derive_seed(cfg.master_seed, cell_stream(task_key, train_n, 0, 0)),
    });
    let target_full = gen_moons(&MoonsSpec {
        n: train_n,
        noise_std: cfg.noise_std,
        rotation_deg: angle_deg,
        seed: derive_seed(cfg.master_seed, cell_stream(task_key, train_n, 0, 1)),
    });
    let test = gen_moons(&MoonsSpec {
        n: cfg.test_n,
        noise_std: cfg.noise_std,
        rotation_deg: angle_deg,
        seed: derive_seed(cfg.master_seed, cell_stream(task_key, train_n, 0, 2)),
    });

    let source = subsample(&source_full, cfg.subsample_fraction, stream(3))?;
    let target = subsample(&target_full, cfg.subsample_fraction, stream(4))?;

    let (model, _) = fit_joint(
        &source,
        &target,
        cfg.hidden,
        cfg.components,
        &train_config(&cfg.train, stream(5)),
    )?;
    let report = transfer_dataset(&model, &source, None)?;
    let transferred = source.with_features(report.transferred.clone())?;

    let krda = svm_fit(&transferred, cfg.svm_c, Gamma::Auto, stream(6))?;
    let baseline = svm_fit(&source, cfg.svm_c, Gamma::Auto, stream(7))?;

    Ok(CellResult {
        suite: "moons".into(),
        task: format!("{angle_deg}"),
        train_n,
        repeat,
        krda_accuracy: Some(krda.accuracy(&test)?),
        source_only_accuracy: Some(baseline.accuracy(&test)?),
        ks_transferred: None,
        ks_raw: None,
        max_quantile_residual: report.max_residual(),
        transfer_failures: report.failures.len(),
    })
}

/// Run the full moons grid (angles x train sizes x repeats). Cells are
/// independent and execute in parallel; the result order is fixed.
pub fn run_moons_suite(cfg: &MoonsSuiteConfig) -> Result<Vec<CellResult>> {
    let mut cells = Vec::new();
    for &angle in &cfg.angles {
        for &train_n in &cfg.train_sizes {
            for repeat in 0..cfg.repeats {
                cells.push((angle, train_n, repeat));
            }
        }
    }
    cells
        .par_iter()
        .map(|&(angle, train_n, repeat)| run_moons_cell(cfg, angle, train_n, repeat))
        .collect()
}

/// Modes equally spaced on a circle, unit variance, equal weights.
pub fn circle_modes(k: usize, radius: f64, phase_deg: f64) -> Vec<GmmMode> {
    (0..k)
        .map(|j| {
            let theta = phase_deg.to_radians()
                + 2.0 * std::f64::consts::PI * j as f64 / k as f64;
            GmmMode {
                weight: 1.0 / k as f64,
                mean: vec![radius * theta.cos(), radius * theta.sin()],
                cov_diag: vec![1.0, 1.0],
            }
        })
        .collect()
}

/// Run one gmm pushforward cell: fit, transfer the source, and compare
/// per-marginal KS statistics of (transferred vs fresh target draws)
/// against (raw source vs fresh target draws).
pub fn run_gmm_cell(cfg: &GmmSuiteConfig, repeat: usize) -> Result<CellResult> {
    let task_key = (cfg.source_modes * 100 + cfg.target_modes) as u64;
    let stream =
        |purpose: u64| derive_seed(cfg.master_seed, cell_stream(task_key, cfg.n, repeat, purpose));

    let source_spec = GmmSpec {
        modes: circle_modes(cfg.source_modes, 3.0, 0.0),
        n: cfg.n,
        seed: stream(0),
    };
    let target_spec = GmmSpec {
        modes: circle_modes(cfg.target_modes, 3.0, 90.0),
        n: cfg.n,
        seed: stream(1),
    };
    let source = gen_gmm(&source_spec)?;
    let target = gen_gmm(&target_spec)?;
    let fresh = gen_gmm(&GmmSpec {
        seed: stream(2),
        ..target_spec.clone()
    })?;

    let (model, _) = fit_joint(
        &source,
        &target,
        cfg.hidden,
        cfg.components,
        &train_config(&cfg.train, stream(3)),
    )?;
    let report = transfer_dataset(&model, &source, None)?;

    let column = |data: &[f64], d: usize, j: usize| -> Vec<f64> {
        data.iter().skip(j).step_by(d).copied().collect()
    };
    let d = source.n_cols();
    let mut ks_t: f64 = 0.0;
    let mut ks_r: f64 = 0.0;
    for j in 0..d {
        let fresh_col = column(fresh.features(), d, j);
        ks_t = ks_t.max(ks_two_sample(
            &column(&report.transferred, d, j),
            &fresh_col,
        ));
        ks_r = ks_r.max(ks_two_sample(&column(source.features(), d, j), &fresh_col));
    }

    Ok(CellResult {
        suite: "gmm".into(),
        task: format!("m{}n{}", cfg.source_modes, cfg.target_modes),
        train_n: cfg.n,
        repeat,
        krda_accuracy: None,
        source_only_accuracy: None,
        ks_transferred: Some(ks_t),
        ks_raw: Some(ks_r),
        max_quantile_residual: report.max_residual(),
        transfer_failures: report.failures.len(),
    })
}

pub fn run_gmm_suite(cfg: &GmmSuiteConfig) -> Result<Vec<CellResult>> {
    (0..cfg.repeats)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&r| run_gmm_cell(cfg, r))
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub const RESULTS_CSV_HEADER: &str = "suite,task,train_n,repeat,krda_accuracy,source_only_accuracy,ks_transferred,ks_raw,max_quantile_residual,transfer_failures";

/// Render per-cell results as CSV. Contains no timings, so repeated
/// runs with the same master seed are byte-identical.
pub fn results_to_csv(results: &[CellResult]) -> String {
    let mut out = String::from(RESULTS_CSV_HEADER);
    out.push('\n');
    for r in results {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.suite,
            r.task,
            r.train_n,
            r.repeat,
            fmt_opt(r.krda_accuracy),
            fmt_opt(r.source_only_accuracy),
            fmt_opt(r.ks_transferred),
            fmt_opt(r.ks_raw),
            r.max_quantile_residual,
            r.transfer_failures,
        ));
    }
    out
}

/// Aggregate cells into per-(task, train size) means with 95% CIs.
pub fn summarize(results: &[CellResult]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, String, usize)> = Vec::new();
    for r in results {
        let key = (r.suite.clone(), r.task.clone(), r.train_n);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(suite, task, train_n)| {
            let group: Vec<&CellResult> = results
                .iter()
                .filter(|r| r.suite == suite && r.task == task && r.train_n == train_n)
                .collect();
            let collect = |get: &dyn Fn(&CellResult) -> Option<f64>| -> Vec<f64> {
                group.iter().filter_map(|r| get(r)).collect()
            };
            let krda = collect(&|r| r.krda_accuracy);
            let src = collect(&|r| r.source_only_accuracy);
            let ks_t = collect(&|r| r.ks_transferred);
            let ks_r = collect(&|r| r.ks_raw);
            let stat = |v: &[f64]| {
                if v.is_empty() {
                    (None, None)
                } else {
                    let (m, hw) = mean_ci95(v);
                    (Some(m), Some(hw))
                }
            };
            let (krda_mean, krda_ci95) = stat(&krda);
            let (source_only_mean, source_only_ci95) = stat(&src);
            SummaryRow {
                suite,
                task,
                train_n,
                repeats: group.len(),
                krda_mean,
                krda_ci95,
                source_only_mean,
                source_only_ci95,
                ks_transferred_mean: stat(&ks_t).0,
                ks_raw_mean: stat(&ks_r).0,
            }
        })
        .collect()
}

pub const SUMMARY_CSV_HEADER: &str = "suite,task,train_n,repeats,krda_mean,krda_ci95,source_only_mean,source_only_ci95,ks_transferred_mean,ks_raw_mean";

pub fn summary_to_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.suite,
            r.task,
            r.train_n,
            r.repeats,
            fmt_opt(r.krda_mean),
            fmt_opt(r.krda_ci95),
            fmt_opt(r.source_only_mean),
            fmt_opt(r.source_only_ci95),
            fmt_opt(r.ks_transferred_mean),
            fmt_opt(r.ks_raw_mean),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_cfg() -> MoonsSuiteConfig {
        MoonsSuiteConfig {
            angles: vec![20.0],
            train_sizes: vec![120],
            test_n: 200,
            repeats: 2,
            train: TrainConfig {
                epochs: 40,
                ..TrainConfig::default()
            },
            hidden: 16,
            ..MoonsSuiteConfig::default()
        }
    }

    #[test]
    fn moons_cell_produces_sane_accuracies() {
        let cfg = quick_cfg();
        let cell = run_moons_cell(&cfg, 20.0, 120, 0).unwrap();
        let acc = cell.krda_accuracy.unwrap();
        assert!((0.5..=1.0).contains(&acc), "accuracy {acc}");
        assert!(cell.max_quantile_residual <= 1e-8);
        assert_eq!(cell.transfer_failures, 0);
    }

    #[test]
    fn suite_results_are_deterministic() {
        let cfg = quick_cfg();
        let a = results_to_csv(&run_moons_suite(&cfg).unwrap());
        let b = results_to_csv(&run_moons_suite(&cfg).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.lines().count(), 1 + 2);
    }

    #[test]
    fn summary_aggregates_by_task() {
        let cfg = quick_cfg();
        let results = run_moons_suite(&cfg).unwrap();
        let summary = summarize(&results);
        assert_eq!(summary.len(), 1);
        assert_eq!(summary[0].repeats, 2);
        assert!(summary[0].krda_mean.is_some());
        assert!(summary[0].ks_transferred_mean.is_none());
    }

    #[test]
    fn circle_modes_are_normalized_and_spaced() {
        let modes = circle_modes(3, 3.0, 90.0);
        let total: f64 = modes.iter().map(|m| m.weight).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((modes[0].mean[0] - 0.0).abs() < 1e-12);
        assert!((modes[0].mean[1] - 3.0).abs() < 1e-12);
    }
}
