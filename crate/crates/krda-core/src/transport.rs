//! Triangular quantile transfer: map each source sample into the target
//! domain component by component so that every conditional quantile is
//! preserved under the two estimated densities.
//!
//! For component `i`, the source conditional CDF is evaluated at the
//! sample's coordinate to get `q`, and the target coordinate is the
//! pseudo-inverse of the target conditional CDF at that same `q`,
//! conditioning on the already-transferred components. The loop runs in
//! standardized coordinates; de-standardization happens once at the end.

use rayon::prelude::*;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{KrdaError, Result};
use crate::mixture::Q_CLIP_EPSILON;
use crate::model::{Domain, KrdaModel};

/// One failed component inversion; the affected cell falls back to the
/// target conditional median so downstream shapes stay rectangular.
#[derive(Debug, Clone, Serialize)]
pub struct TransferFailure {
    pub row: usize,
    pub component: usize,
    pub message: String,
}

/// Batch transfer output: transferred coordinates (original scale),
/// the per-cell quantiles `F_S^i(x^i)` after clipping, the per-cell
/// quantile-preservation residuals, and any inversion failures.
#[derive(Debug, Clone)]
pub struct TransferReport {
    pub transferred: Vec<f64>,
    pub quantiles: Vec<f64>,
    pub residuals: Vec<f64>,
    pub failures: Vec<TransferFailure>,
    pub n_rows: usize,
    pub n_cols: usize,
}

impl TransferReport {
    pub fn transferred_row(&self, i: usize) -> &[f64] {
        &self.transferred[i * self.n_cols..(i + 1) * self.n_cols]
    }

    /// Largest quantile-preservation residual over all non-failed cells;
    /// 0 for an empty report.
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

struct RowTransfer {
    standardized: Vec<f64>,
    quantiles: Vec<f64>,
    /// NaN marks a failed cell; the batch assembler zeroes it.
    residuals: Vec<f64>,
    failures: Vec<(usize, String)>,
}

/// Transfer one standardized source row; shared by the single-sample and
/// batch entry points. The target activation is advanced incrementally
/// over the partially built output, mirroring ancestral sampling.
fn transfer_row_standardized(model: &KrdaModel, z_source: &[f64]) -> RowTransfer {
    let d = model.d;
    let source_head = model.head(Domain::Source);
    let target_head = model.head(Domain::Target);
    let src_acts = model
        .forward_activations(z_source)
        .expect("dimensions checked by caller");
    let mut a_target = model.backbone.c.clone();

    let mut z_target = vec![0.0; d];
    let mut quantiles = vec![0.0; d];
    let mut residuals = vec![0.0; d];
    let mut failures = Vec::new();
    for i in 0..d {
        let source_mix = model.mixture_from_activation(source_head, src_acts.a_i(i), i);
        let target_mix = model.mixture_from_activation(target_head, &a_target, i);
        let q = source_mix
            .cdf(z_source[i])
            .clamp(Q_CLIP_EPSILON, 1.0 - Q_CLIP_EPSILON);
        quantiles[i] = q;
        match target_mix.inverse_cdf(q) {
            Ok(z) => {
                z_target[i] = z;
                residuals[i] = (target_mix.cdf(z) - q).abs();
            }
            Err(err) => {
                failures.push((i, err.to_string()));
                // Median fallback keeps the row rectangular; if even the
                // median cannot be bracketed the cell stays at 0.
                z_target[i] = target_mix.inverse_cdf(0.5).unwrap_or(0.0);
                residuals[i] = f64::NAN;
            }
        }
        if i + 1 < d {
            for hh in 0..model.hidden {
                a_target[hh] += z_target[i] * model.backbone.w[hh * d + i];
            }
        }
    }
    RowTransfer {
        standardized: z_target,
        quantiles,
        residuals,
        failures,
    }
}

/// Transfer a single sample (original coordinates in, original
/// coordinates out). Fails on the first component whose inversion
/// cannot be bracketed.
pub fn transfer_sample(model: &KrdaModel, x_source: &[f64]) -> Result<Vec<f64>> {
    if x_source.len() != model.d {
        return Err(KrdaError::DimensionMismatch {
            context: "transfer_sample input",
            expected: model.d,
            got: x_source.len(),
        });
    }
    let z = model.standardizer.apply_vec(x_source);
    let row = transfer_row_standardized(model, &z);
    if let Some((component, message)) = row.failures.into_iter().next() {
        return Err(KrdaError::InvalidConfig(format!(
            "inversion failed at component {component}: {message}"
        )));
    }
    Ok(model.standardizer.invert_vec(&row.standardized))
}

/// Transfer every row of a dataset. Rows are independent and processed
/// in parallel; output order always matches input order. Per-row
/// failures are collected in the report instead of aborting the batch.
///
/// `workers` overrides the thread count (`None` uses the global pool).
pub fn transfer_dataset(
    model: &KrdaModel,
    source: &Dataset,
    workers: Option<usize>,
) -> Result<TransferReport> {
    if source.n_rows() > 0 && source.n_cols() != model.d {
        return Err(KrdaError::DimensionMismatch {
            context: "transfer_dataset input columns",
            expected: model.d,
            got: source.n_cols(),
        });
    }
    let d = model.d;
    let standardized = model.standardizer.apply_dataset(source);
    let rows: Vec<&[f64]> = standardized.chunks_exact(d).collect();

    let run = || -> Vec<RowTransfer> {
        rows.par_iter()
            .map(|z| transfer_row_standardized(model, z))
            .collect()
    };
    let results = match workers {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| KrdaError::InvalidConfig(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };

    let n = source.n_rows();
    let mut transferred = Vec::with_capacity(n * d);
    let mut quantiles = Vec::with_capacity(n * d);
    let mut residuals = Vec::with_capacity(n * d);
    let mut failures = Vec::new();
    for (row_idx, row) in results.into_iter().enumerate() {
        transferred.extend(model.standardizer.invert_vec(&row.standardized));
        quantiles.extend(row.quantiles);
        residuals.extend(
            row.residuals
                .iter()
                .map(|r| if r.is_finite() { *r } else { 0.0 }),
        );
        for (component, message) in row.failures {
            failures.push(TransferFailure {
                row: row_idx,
                component,
                message,
            });
        }
    }
    Ok(TransferReport {
        transferred,
        quantiles,
        residuals,
        failures,
        n_rows: n,
        n_cols: d,
    })
}
