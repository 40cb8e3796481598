//! Joint maximum-likelihood training of the two-domain density model
//! with Adam (ascent direction).
//!
//! Each epoch alternates one source minibatch and one target minibatch,
//! so the shared backbone sees balanced gradients from both domains.
//! A per-domain validation split drives early stopping; the returned
//! model is the snapshot with the best joint validation log-likelihood.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, Standardizer};
use crate::error::{KrdaError, Result};
use crate::model::{Backbone, Domain, DomainHead, Gradients, KrdaModel};

/// Training hyperparameters.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    /// Fraction of each domain's rows held out for validation, in [0, 0.5].
    pub validation_fraction: f64,
    /// Consecutive non-improving validation epochs tolerated before
    /// stopping; 0 disables early stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 64,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            validation_fraction: 0.1,
            patience: 30,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(KrdaError::InvalidConfig(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        for (name, beta) in [("beta1", self.adam_beta1), ("beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(KrdaError::InvalidConfig(format!(
                    "adam_{name} must be in [0, 1), got {beta}"
                )));
            }
        }
        if !(0.0..=0.5).contains(&self.validation_fraction) {
            return Err(KrdaError::InvalidConfig(format!(
                "validation_fraction must be in [0, 0.5], got {}",
                self.validation_fraction
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(KrdaError::InvalidConfig(
                "epochs and batch_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// First/second-moment accumulators mirroring the trainable parameters,
/// with one step counter per parameter group (the backbone advances on
/// every minibatch, each head only on its own domain's batches).
#[derive(Debug, Clone)]
pub struct AdamState {
    m_backbone: Backbone,
    v_backbone: Backbone,
    backbone_steps: u64,
    m_source: DomainHead,
    v_source: DomainHead,
    source_steps: u64,
    m_target: DomainHead,
    v_target: DomainHead,
    target_steps: u64,
}

impl AdamState {
    pub fn new(hidden: usize, components: usize, d: usize) -> Self {
        Self {
            m_backbone: Backbone::zeros(hidden, d),
            v_backbone: Backbone::zeros(hidden, d),
            backbone_steps: 0,
            m_source: DomainHead::zeros(hidden, components, d),
            v_source: DomainHead::zeros(hidden, components, d),
            source_steps: 0,
            m_target: DomainHead::zeros(hidden, components, d),
            v_target: DomainHead::zeros(hidden, components, d),
            target_steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.backbone_steps
    }
}

/// One bias-corrected Adam update on a flat parameter block, in the
/// ascent direction. Rejects non-finite gradients.
pub(crate) fn adam_update_block(
    block: &'static str,
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: u64,
    cfg: &TrainConfig,
) -> Result<()> {
    debug_assert_eq!(params.len(), grads.len());
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let bc1 = 1.0 - b1.powi(step as i32);
    let bc2 = 1.0 - b2.powi(step as i32);
    for (index, ((p, &g), (mi, vi))) in params
        .iter_mut()
        .zip(grads)
        .zip(m.iter_mut().zip(v.iter_mut()))
        .enumerate()
    {
        if !g.is_finite() {
            return Err(KrdaError::NonFiniteGradient { block, index });
        }
        *mi = b1 * *mi + (1.0 - b1) * g;
        *vi = b2 * *vi + (1.0 - b2) * g * g;
        let m_hat = *mi / bc1;
        let v_hat = *vi / bc2;
        *p += cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
    }
    Ok(())
}

/// Apply one Adam step to the shared backbone and the selected domain
/// head, advancing their step counters. Parameters of the other head
/// (and its moments) are untouched.
pub fn adam_step(
    model: &mut KrdaModel,
    domain: Domain,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    state.backbone_steps += 1;
    let t = state.backbone_steps;
    for ((p, g), (m, v)) in model
        .backbone
        .blocks_mut()
        .into_iter()
        .zip(grads.backbone.blocks())
        .zip(
            state
                .m_backbone
                .blocks_mut()
                .into_iter()
                .zip(state.v_backbone.blocks_mut()),
        )
    {
        adam_update_block("backbone", p, g, m, v, t, cfg)?;
    }
    let (head, m_head, v_head, steps) = match domain {
        Domain::Source => (
            &mut model.source_head,
            &mut state.m_source,
            &mut state.v_source,
            &mut state.source_steps,
        ),
        Domain::Target => (
            &mut model.target_head,
            &mut state.m_target,
            &mut state.v_target,
            &mut state.target_steps,
        ),
    };
    *steps += 1;
    let t = *steps;
    for ((p, g), (m, v)) in head
        .blocks_mut()
        .into_iter()
        .zip(grads.head.blocks())
        .zip(m_head.blocks_mut().into_iter().zip(v_head.blocks_mut()))
    {
        adam_update_block("head", p, g, m, v, t, cfg)?;
    }
    Ok(())
}

/// Per-epoch training metrics, one CSV line each.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub source_train_ll: f64,
    pub target_train_ll: f64,
    pub source_val_ll: Option<f64>,
    pub target_val_ll: Option<f64>,
    pub elapsed_ms: u64,
}

pub const METRICS_CSV_HEADER: &str =
    "epoch,source_train_ll,target_train_ll,source_val_ll,target_val_ll,elapsed_ms";

/// Render metrics as CSV with header.
pub fn metrics_to_csv(metrics: &[EpochMetrics]) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for m in metrics {
        let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            m.epoch,
            m.source_train_ll,
            m.target_train_ll,
            opt(m.source_val_ll),
            opt(m.target_val_ll),
            m.elapsed_ms
        ));
    }
    out
}

/// Derive an independent sub-seed from a master seed (splitmix64 over
/// the stream index).
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct DomainData {
    train: Vec<f64>,
    val: Vec<f64>,
    n_train: usize,
}

fn split_domain(
    standardized: Vec<f64>,
    d: usize,
    fraction: f64,
    rng: &mut ChaCha8Rng,
) -> DomainData {
    let n = standardized.len() / d;
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(rng);
    let n_val = (fraction * n as f64).floor() as usize;
    let take = |idx: &[usize]| -> Vec<f64> {
        let mut out = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            out.extend_from_slice(&standardized[i * d..(i + 1) * d]);
        }
        out
    };
    DomainData {
        val: take(&indices[..n_val]),
        train: take(&indices[n_val..]),
        n_train: n - n_val,
    }
}

/// Jointly fit source and target densities by maximizing each domain's
/// mean log-likelihood. Returns the best-validation model and the
/// per-epoch metrics log. Deterministic given `cfg.seed`.
pub fn fit_joint(
    source: &Dataset,
    target: &Dataset,
    hidden: usize,
    components: usize,
    cfg: &TrainConfig,
) -> Result<(KrdaModel, Vec<EpochMetrics>)> {
    cfg.validate()?;
    let d = source.n_cols();
    if target.n_cols() != d {
        return Err(KrdaError::DimensionMismatch {
            context: "fit_joint source vs target columns",
            expected: d,
            got: target.n_cols(),
        });
    }
    if source.n_rows() < 2 || target.n_rows() < 2 {
        return Err(KrdaError::EmptyDataset(
            "fit_joint needs at least 2 rows per domain",
        ));
    }

    let standardizer = Standardizer::fit(&[source, target])?;
    let mut split_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1));
    let src = split_domain(
        standardizer.apply_dataset(source),
        d,
        cfg.validation_fraction,
        &mut split_rng,
    );
    let tgt = split_domain(
        standardizer.apply_dataset(target),
        d,
        cfg.validation_fraction,
        &mut split_rng,
    );

    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0));
    let mut model = KrdaModel::init(d, hidden, components, standardizer, &mut init_rng);
    let mut state = AdamState::new(hidden, components, d);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 2));

    let has_val = !src.val.is_empty() && !tgt.val.is_empty();
    let mut best: Option<(f64, KrdaModel)> = None;
    let mut bad_epochs = 0usize;
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let started = Instant::now();

    let mut src_order: Vec<usize> = (0..src.n_train).collect();
    let mut tgt_order: Vec<usize> = (0..tgt.n_train).collect();
    let mut batch_buf = vec![0.0; cfg.batch_size * d];

    for epoch in 1..=cfg.epochs {
        src_order.shuffle(&mut shuffle_rng);
        tgt_order.shuffle(&mut shuffle_rng);
        let nb_src = src.n_train.div_ceil(cfg.batch_size);
        let nb_tgt = tgt.n_train.div_ceil(cfg.batch_size);
        for b in 0..nb_src.max(nb_tgt) {
            for (domain, data, order, nb) in [
                (Domain::Source, &src, &src_order, nb_src),
                (Domain::Target, &tgt, &tgt_order, nb_tgt),
            ] {
                if b >= nb {
                    continue;
                }
                let lo = b * cfg.batch_size;
                let hi = (lo + cfg.batch_size).min(data.n_train);
                let rows = &order[lo..hi];
                batch_buf.resize(rows.len() * d, 0.0);
                for (slot, &i) in rows.iter().enumerate() {
                    batch_buf[slot * d..(slot + 1) * d]
                        .copy_from_slice(&data.train[i * d..(i + 1) * d]);
                }
                let (_, grads) = model.log_likelihood_grad(domain, &batch_buf)?;
                adam_step(&mut model, domain, &grads, &mut state, cfg)?;
            }
        }

        let source_train_ll = model.mean_log_likelihood(Domain::Source, &src.train)?;
        let target_train_ll = model.mean_log_likelihood(Domain::Target, &tgt.train)?;
        let (source_val_ll, target_val_ll) = if has_val {
            (
                Some(model.mean_log_likelihood(Domain::Source, &src.val)?),
                Some(model.mean_log_likelihood(Domain::Target, &tgt.val)?),
            )
        } else {
            (None, None)
        };
        metrics.push(EpochMetrics {
            epoch,
            source_train_ll,
            target_train_ll,
            source_val_ll,
            target_val_ll,
            elapsed_ms: started.elapsed().as_millis() as u64,
        });

        if has_val {
            let joint = source_val_ll.unwrap() + target_val_ll.unwrap();
            let improved = best.as_ref().map_or(true, |(b, _)| joint > *b);
            if improved {
                best = Some((joint, model.clone()));
                bad_epochs = 0;
            } else {
                bad_epochs += 1;
                if cfg.patience > 0 && bad_epochs >= cfg.patience {
                    break;
                }
            }
        }
    }

    if let Some((_, best_model)) = best {
        model = best_model;
    }
    Ok((model, metrics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_gmm, GmmMode, GmmSpec};
    use crate::mixture::GaussianMixture1D;
    use rand::Rng;

    fn cfg(epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs,
            seed,
            ..TrainConfig::default()
        }
    }

    fn standard_normal_data(n: usize, d: usize, seed: u64) -> Dataset {
        let spec = GmmSpec {
            modes: vec![GmmMode {
                weight: 1.0,
                mean: vec![0.0; d],
                cov_diag: vec![1.0; d],
            }],
            n,
            seed,
        };
        gen_gmm(&spec).unwrap()
    }

    #[test]
    fn adam_zero_gradient_leaves_parameters_unchanged() {
        let cfg = TrainConfig::default();
        let mut p = vec![0.5, -1.25];
        let mut m = vec![0.0; 2];
        let mut v = vec![0.0; 2];
        adam_update_block("t", &mut p, &[0.0, 0.0], &mut m, &mut v, 1, &cfg).unwrap();
        assert_eq!(p, vec![0.5, -1.25]);
        assert_eq!(m, vec![0.0, 0.0]);
    }

    #[test]
    fn adam_moments_decay_toward_zero_under_zero_gradient() {
        let cfg = TrainConfig::default();
        let mut p = vec![0.0];
        let mut m = vec![1.0];
        let mut v = vec![1.0];
        for t in 1..=50 {
            adam_update_block("t", &mut p, &[0.0], &mut m, &mut v, t, &cfg).unwrap();
        }
        assert!(m[0].abs() < 6e-3 && v[0] < 1.0);
    }

    #[test]
    fn adam_first_step_matches_hand_computation() {
        // Fresh state, gradient g: m_hat = g, v_hat = g^2, so the ascent
        // update is lr * g / (|g| + eps).
        let cfg = TrainConfig::default();
        let g = 0.3;
        let mut p = vec![1.0];
        let mut m = vec![0.0];
        let mut v = vec![0.0];
        adam_update_block("t", &mut p, &[g], &mut m, &mut v, 1, &cfg).unwrap();
        let expected = 1.0 + 1e-3 * g / (g + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15, "p = {}", p[0]);
    }

    #[test]
    fn adam_constant_gradient_update_approaches_learning_rate() {
        let cfg = TrainConfig::default();
        let mut p = vec![0.0];
        let mut m = vec![0.0];
        let mut v = vec![0.0];
        let mut last = 0.0;
        for t in 1..=5000u64 {
            let before = p[0];
            adam_update_block("t", &mut p, &[-0.7], &mut m, &mut v, t, &cfg).unwrap();
            last = (p[0] - before).abs();
        }
        assert!((last - 1e-3).abs() < 1e-6, "final step size {last}");
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let cfg = TrainConfig::default();
        let mut p = vec![0.0];
        let mut m = vec![0.0];
        let mut v = vec![0.0];
        let err = adam_update_block("blk", &mut p, &[f64::NAN], &mut m, &mut v, 1, &cfg);
        assert!(matches!(err, Err(KrdaError::NonFiniteGradient { .. })));
    }

    #[test]
    fn adam_step_on_source_leaves_target_head_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut model = KrdaModel::init(2, 6, 3, Standardizer::identity(2), &mut rng);
        let snapshot = model.target_head.clone();
        let mut state = AdamState::new(6, 3, 2);
        let cfg = TrainConfig::default();
        let batch: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for _ in 0..10 {
            let (_, grads) = model.log_likelihood_grad(Domain::Source, &batch).unwrap();
            adam_step(&mut model, Domain::Source, &grads, &mut state, &cfg).unwrap();
        }
        assert_eq!(model.target_head, snapshot);
        assert_ne!(model.source_head, DomainHead::zeros(6, 3, 2));
    }

    #[test]
    fn fit_reaches_gaussian_entropy_bound() {
        let source = standard_normal_data(800, 2, 1);
        let target = standard_normal_data(800, 2, 2);
        let config = cfg(120, 7);
        let (model, metrics) = fit_joint(&source, &target, 32, 5, &config).unwrap();
        assert!(!metrics.is_empty());
        let last = metrics.last().unwrap();
        // True mean log-density of N(0, I_2) is -2.838.
        assert!(last.source_val_ll.unwrap() >= -3.0, "{last:?}");
        assert!(last.target_val_ll.unwrap() >= -3.0, "{last:?}");
        assert!(metrics
            .iter()
            .all(|m| m.source_train_ll.is_finite() && m.target_train_ll.is_finite()));
        model.validate().unwrap();
    }

    #[test]
    fn fit_matches_known_two_mode_density() {
        let spec = GmmSpec {
            modes: vec![
                GmmMode {
                    weight: 0.5,
                    mean: vec![-3.0],
                    cov_diag: vec![1.0],
                },
                GmmMode {
                    weight: 0.5,
                    mean: vec![3.0],
                    cov_diag: vec![1.0],
                },
            ],
            n: 3000,
            seed: 11,
        };
        let source = gen_gmm(&spec).unwrap();
        let target = gen_gmm(&GmmSpec {
            seed: 12,
            ..spec.clone()
        })
        .unwrap();
        let config = cfg(150, 3);
        let (model, _) = fit_joint(&source, &target, 24, 5, &config).unwrap();

        // Monte Carlo oracle: mean log-density of the true generator on
        // fresh draws from itself.
        let truth =
            GaussianMixture1D::new(vec![0.5, 0.5], vec![-3.0, 3.0], vec![1.0, 1.0]).unwrap();
        let fresh = gen_gmm(&GmmSpec {
            n: 20_000,
            seed: 13,
            ..spec
        })
        .unwrap();
        let oracle: f64 = fresh.rows().map(|r| truth.log_pdf(r[0])).sum::<f64>()
            / fresh.n_rows() as f64;

        // Model log-density in original coordinates: subtract the
        // standardization Jacobian.
        let z = model.standardizer.apply_dataset(&fresh);
        let jln: f64 = model.standardizer.stds.iter().map(|s| s.ln()).sum();
        let model_ll = model.mean_log_likelihood(Domain::Source, &z).unwrap() - jln;
        assert!(
            (model_ll - oracle).abs() <= 0.1,
            "model {model_ll} vs oracle {oracle}"
        );
    }

    #[test]
    fn fit_is_deterministic_given_seed() {
        let source = standard_normal_data(300, 2, 21);
        let target = standard_normal_data(300, 2, 22);
        let config = cfg(20, 9);
        let (a, _) = fit_joint(&source, &target, 16, 3, &config).unwrap();
        let (b, _) = fit_joint(&source, &target, 16, 3, &config).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn fit_runs_exactly_epochs_without_validation() {
        let source = standard_normal_data(100, 2, 31);
        let target = standard_normal_data(100, 2, 32);
        let config = TrainConfig {
            epochs: 17,
            validation_fraction: 0.0,
            patience: 0,
            seed: 1,
            ..TrainConfig::default()
        };
        let (_, metrics) = fit_joint(&source, &target, 8, 2, &config).unwrap();
        assert_eq!(metrics.len(), 17);
        assert!(metrics.iter().all(|m| m.source_val_ll.is_none()));
    }

    #[test]
    fn fit_stops_early_when_validation_stalls() {
        let source = standard_normal_data(400, 2, 41);
        let target = standard_normal_data(400, 2, 42);
        let config = TrainConfig {
            epochs: 400,
            patience: 3,
            seed: 2,
            ..TrainConfig::default()
        };
        let (_, metrics) = fit_joint(&source, &target, 16, 3, &config).unwrap();
        assert!(
            metrics.len() < 400,
            "expected early stop, ran {} epochs",
            metrics.len()
        );
    }

    #[test]
    fn fit_rejects_mismatched_dimensions() {
        let source = standard_normal_data(50, 2, 51);
        let target = standard_normal_data(50, 3, 52);
        let err = fit_joint(&source, &target, 8, 2, &cfg(5, 1));
        match err {
            Err(KrdaError::DimensionMismatch { expected, got, .. }) => {
                assert_eq!((expected, got), (2, 3));
            }
            other => panic!("expected DimensionMismatch, got {other:?}"),
        }
    }

    #[test]
    fn metrics_csv_has_header_and_rows() {
        let rows = vec![EpochMetrics {
            epoch: 1,
            source_train_ll: -2.5,
            target_train_ll: -2.25,
            source_val_ll: Some(-2.75),
            target_val_ll: None,
            elapsed_ms: 12,
        }];
        let text = metrics_to_csv(&rows);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), METRICS_CSV_HEADER);
        assert_eq!(lines.next().unwrap(), "1,-2.5,-2.25,-2.75,,12");
    }
}
