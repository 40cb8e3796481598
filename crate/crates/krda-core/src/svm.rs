//! Binary kernel SVM trained with a simplified sequential-minimal-
//! optimization solver (random second index, RBF kernel).
//!
//! Labels are {0, 1} externally and mapped to {-1, +1} internally. The
//! solver sweeps all points, picks KKT violators, pairs each with a
//! random partner, and solves the two-variable subproblem analytically;
//! it stops after `MAX_PASSES` consecutive sweeps without a change.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{KrdaError, Result};

const KKT_TOL: f64 = 1e-3;
const ALPHA_CHANGE_TOL: f64 = 1e-7;
const MAX_PASSES: usize = 50;

/// Serialization format version for SVM model dumps.
pub const SVM_FORMAT_VERSION: u32 = 1;

/// Trained classifier: support vectors with dual coefficients
/// `alpha_j * y_j`, a bias, and the RBF kernel parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvmModel {
    pub support_vectors: Vec<f64>,
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
    pub n_features: usize,
}

/// RBF bandwidth choice: a fixed value, or `Auto` for
/// `1 / (d * mean per-column variance)` of the training features.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum Gamma {
    #[default]
    Auto,
    Fixed(f64),
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let mut sq = 0.0;
    for (x, y) in a.iter().zip(b) {
        sq += (x - y) * (x - y);
    }
    (-gamma * sq).exp()
}

/// `1 / (d * mean per-column variance)`; falls back to 1 when the data
/// is constant.
pub fn auto_gamma(train: &Dataset) -> f64 {
    let (n, d) = (train.n_rows(), train.n_cols());
    if n == 0 || d == 0 {
        return 1.0;
    }
    let mut mean_var = 0.0;
    for j in 0..d {
        let mean: f64 = train.rows().map(|r| r[j]).sum::<f64>() / n as f64;
        let var: f64 = train.rows().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n as f64;
        mean_var += var;
    }
    mean_var /= d as f64;
    if mean_var > 0.0 {
        1.0 / (d as f64 * mean_var)
    } else {
        1.0
    }
}

/// Fit the SVM on a labeled dataset. Deterministic given `seed`.
pub fn svm_fit(train: &Dataset, c: f64, gamma: Gamma, seed: u64) -> Result<SvmModel> {
    let labels = train
        .labels()
        .ok_or(KrdaError::EmptyDataset("svm_fit needs labels"))?;
    let n = train.n_rows();
    if n < 2 {
        return Err(KrdaError::EmptyDataset("svm_fit needs at least 2 rows"));
    }
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(KrdaError::SingleClassData);
    }
    if !(c > 0.0) {
        return Err(KrdaError::InvalidConfig(format!("C must be > 0, got {c}")));
    }
    let gamma = match gamma {
        Gamma::Auto => auto_gamma(train),
        Gamma::Fixed(g) if g > 0.0 => g,
        Gamma::Fixed(g) => {
            return Err(KrdaError::InvalidConfig(format!(
                "gamma must be > 0, got {g}"
            )))
        }
    };
    let y: Vec<f64> = labels
        .iter()
        .map(|&l| if l == 1 { 1.0 } else { -1.0 })
        .collect();

    // Precompute the Gram matrix; training sets here are a few thousand
    // rows at most.
    let mut kernel = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let k = rbf(train.row(i), train.row(j), gamma);
            kernel[i * n + j] = k;
            kernel[j * n + i] = k;
        }
    }

    let mut alpha = vec![0.0; n];
    let mut bias = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Two-variable subproblem on (i, j); true if alpha moved.
    fn try_pair(
        i: usize,
        j: usize,
        alpha: &mut [f64],
        bias: &mut f64,
        kernel: &[f64],
        y: &[f64],
        c: f64,
    ) -> bool {
        let n = y.len();
        let decision = |alpha: &[f64], bias: f64, p: usize| -> f64 {
            let mut f = bias;
            for (q, &a) in alpha.iter().enumerate() {
                if a != 0.0 {
                    f += a * y[q] * kernel[q * n + p];
                }
            }
            f
        };
        let e_i = decision(alpha, *bias, i) - y[i];
        let e_j = decision(alpha, *bias, j) - y[j];
        let (a_i_old, a_j_old) = (alpha[i], alpha[j]);
        let (lo, hi) = if y[i] != y[j] {
            let diff = a_j_old - a_i_old;
            (diff.max(0.0), (c + diff).min(c))
        } else {
            let sum = a_i_old + a_j_old;
            ((sum - c).max(0.0), sum.min(c))
        };
        if lo >= hi {
            return false;
        }
        let eta = 2.0 * kernel[i * n + j] - kernel[i * n + i] - kernel[j * n + j];
        if eta >= 0.0 {
            return false;
        }
        let a_j = (a_j_old - y[j] * (e_i - e_j) / eta).clamp(lo, hi);
        if (a_j - a_j_old).abs() < ALPHA_CHANGE_TOL {
            return false;
        }
        // Snap to the box so bound points never linger one ulp inside it.
        let snap = |a: f64| {
            if a < 1e-8 {
                0.0
            } else if a > c - 1e-8 {
                c
            } else {
                a
            }
        };
        let a_j = snap(a_j);
        let a_i = snap(a_i_old + y[i] * y[j] * (a_j_old - a_j));
        alpha[i] = a_i;
        alpha[j] = a_j;
        let b1 = *bias
            - e_i
            - y[i] * (a_i - a_i_old) * kernel[i * n + i]
            - y[j] * (a_j - a_j_old) * kernel[i * n + j];
        let b2 = *bias
            - e_j
            - y[i] * (a_i - a_i_old) * kernel[i * n + j]
            - y[j] * (a_j - a_j_old) * kernel[j * n + j];
        *bias = if a_i > 0.0 && a_i < c {
            b1
        } else if a_j > 0.0 && a_j < c {
            b2
        } else {
            0.5 * (b1 + b2)
        };
        true
    }

    let decision = |alpha: &[f64], bias: f64, i: usize| -> f64 {
        let mut f = bias;
        for (j, &a) in alpha.iter().enumerate() {
            if a != 0.0 {
                f += a * y[j] * kernel[j * n + i];
            }
        }
        f
    };

    let mut passes = 0;
    while passes < MAX_PASSES {
        let mut changed = 0;
        for i in 0..n {
            let e_i = decision(&alpha, bias, i) - y[i];
            let violates = (y[i] * e_i < -KKT_TOL && alpha[i] < c)
                || (y[i] * e_i > KKT_TOL && alpha[i] > 0.0);
            if !violates {
                continue;
            }
            // Random partner first; if it makes no progress, scan the
            // rest from a random offset so stubborn violators still get
            // every possible pairing.
            let j0 = {
                let mut j = rng.gen_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                j
            };
            if try_pair(i, j0, &mut alpha, &mut bias, &kernel, &y, c) {
                changed += 1;
                continue;
            }
            let start = rng.gen_range(0..n);
            for off in 0..n {
                let j = (start + off) % n;
                if j == i || j == j0 {
                    continue;
                }
                if try_pair(i, j, &mut alpha, &mut bias, &kernel, &y, c) {
                    changed += 1;
                    break;
                }
            }
        }
        passes = if changed == 0 { passes + 1 } else { 0 };
    }

    // Recompute the bias from the converged duals so it does not carry
    // noise from stale sweep updates: interior support vectors pin it
    // (their margin targets coincide at the optimum, so average them);
    // with none, b is only determined up to the interval given by the
    // bound constraints, so take its midpoint.
    let f0 = |i: usize| -> f64 {
        let mut f = 0.0;
        for (j, &a) in alpha.iter().enumerate() {
            if a != 0.0 {
                f += a * y[j] * kernel[j * n + i];
            }
        }
        f
    };
    let mut interior_sum = 0.0;
    let mut interior_count = 0usize;
    let mut b_lo = f64::NEG_INFINITY;
    let mut b_hi = f64::INFINITY;
    for i in 0..n {
        let t = y[i] - f0(i);
        if alpha[i] > 0.0 && alpha[i] < c {
            interior_sum += t;
            interior_count += 1;
        } else if (alpha[i] <= 0.0) == (y[i] > 0.0) {
            // alpha = 0 with y = +1, or alpha = C with y = -1: the
            // margin constraint bounds b from below.
            b_lo = b_lo.max(t);
        } else {
            b_hi = b_hi.min(t);
        }
    }
    if interior_count > 0 {
        bias = interior_sum / interior_count as f64;
    } else if b_lo.is_finite() && b_hi.is_finite() {
        bias = 0.5 * (b_lo + b_hi);
    }

    let mut support_vectors = Vec::new();
    let mut dual_coefs = Vec::new();
    for i in 0..n {
        if alpha[i] > 0.0 {
            support_vectors.extend_from_slice(train.row(i));
            dual_coefs.push(alpha[i] * y[i]);
        }
    }
    Ok(SvmModel {
        support_vectors,
        dual_coefs,
        bias,
        gamma,
        c,
        n_features: train.n_cols(),
    })
}

impl SvmModel {
    pub fn n_support(&self) -> usize {
        self.dual_coefs.len()
    }

    /// Signed decision value `sum_j coef_j K(x, sv_j) + b`.
    pub fn decision_function(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(KrdaError::DimensionMismatch {
                context: "svm_predict input",
                expected: self.n_features,
                got: x.len(),
            });
        }
        let mut f = self.bias;
        for (sv, coef) in self
            .support_vectors
            .chunks_exact(self.n_features)
            .zip(&self.dual_coefs)
        {
            f += coef * rbf(x, sv, self.gamma);
        }
        Ok(f)
    }

    /// Predicted class in {0, 1}; a decision value of exactly 0 maps to 1.
    pub fn predict(&self, x: &[f64]) -> Result<u8> {
        Ok(if self.decision_function(x)? >= 0.0 { 1 } else { 0 })
    }

    /// Fraction of correct predictions on a labeled test set.
    pub fn accuracy(&self, test: &Dataset) -> Result<f64> {
        let labels = test
            .labels()
            .ok_or(KrdaError::EmptyDataset("accuracy needs labels"))?;
        if test.n_rows() == 0 {
            return Err(KrdaError::EmptyDataset("accuracy needs rows"));
        }
        let mut correct = 0usize;
        for (i, row) in test.rows().enumerate() {
            if self.predict(row)? == labels[i] {
                correct += 1;
            }
        }
        Ok(correct as f64 / test.n_rows() as f64)
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            format_version: u32,
            #[serde(flatten)]
            model: &'a SvmModel,
        }
        Ok(serde_json::to_string_pretty(&Doc {
            format_version: SVM_FORMAT_VERSION,
            model: self,
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            format_version: u32,
            #[serde(flatten)]
            model: SvmModel,
        }
        let doc: Doc = serde_json::from_str(text)?;
        if doc.format_version != SVM_FORMAT_VERSION {
            return Err(KrdaError::InvalidConfig(format!(
                "unsupported svm format version {}",
                doc.format_version
            )));
        }
        Ok(doc.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_moons, MoonsSpec};

    fn tiny(rows: Vec<Vec<f64>>, labels: Vec<u8>) -> Dataset {
        Dataset::from_rows(rows, Some(labels)).unwrap()
    }

    #[test]
    fn two_separated_points_become_support_vectors() {
        let train = tiny(vec![vec![-2.0, 0.0], vec![2.0, 0.0]], vec![0, 1]);
        let model = svm_fit(&train, 1.0, Gamma::Auto, 1).unwrap();
        assert_eq!(model.n_support(), 2);
        assert_eq!(model.accuracy(&train).unwrap(), 1.0);
    }

    #[test]
    fn xor_pattern_is_separated_by_rbf() {
        let train = tiny(
            vec![
                vec![0.0, 0.0],
                vec![1.0, 1.0],
                vec![0.0, 1.0],
                vec![1.0, 0.0],
            ],
            vec![0, 0, 1, 1],
        );
        let model = svm_fit(&train, 1.0, Gamma::Auto, 2).unwrap();
        assert_eq!(model.accuracy(&train).unwrap(), 1.0);
    }

    #[test]
    fn moons_training_accuracy_is_high() {
        let train = gen_moons(&MoonsSpec {
            n: 1000,
            noise_std: 0.1,
            rotation_deg: 0.0,
            seed: 3,
        });
        let model = svm_fit(&train, 1.0, Gamma::Auto, 4).unwrap();
        let acc = model.accuracy(&train).unwrap();
        assert!(acc >= 0.99, "training accuracy {acc}");
    }

    #[test]
    fn kkt_conditions_hold_after_convergence() {
        let train = gen_moons(&MoonsSpec {
            n: 300,
            noise_std: 0.1,
            rotation_deg: 0.0,
            seed: 5,
        });
        let c = 1.0;
        let model = svm_fit(&train, c, Gamma::Auto, 6).unwrap();
        let d = train.n_cols();
        for (i, row) in train.rows().enumerate() {
            let yi = if train.labels().unwrap()[i] == 1 {
                1.0
            } else {
                -1.0
            };
            let margin = yi * model.decision_function(row).unwrap();
            // Recover this point's alpha: zero unless it is a support vector.
            let mut alpha = 0.0;
            for (sv, coef) in model.support_vectors.chunks_exact(d).zip(&model.dual_coefs) {
                if sv == row {
                    alpha = coef * yi;
                    break;
                }
            }
            if alpha <= 0.0 {
                assert!(
                    margin >= 1.0 - KKT_TOL,
                    "point {i}: alpha=0, margin {margin}"
                );
            } else if alpha >= c {
                assert!(
                    margin <= 1.0 + KKT_TOL,
                    "point {i}: alpha=C, margin {margin}"
                );
            } else {
                assert!(
                    (margin - 1.0).abs() <= KKT_TOL,
                    "point {i}: 0<alpha<C, margin {margin}"
                );
            }
        }
    }

    #[test]
    fn prediction_dimension_mismatch_is_rejected() {
        let train = tiny(vec![vec![-1.0, 0.0], vec![1.0, 0.0]], vec![0, 1]);
        let model = svm_fit(&train, 1.0, Gamma::Auto, 7).unwrap();
        assert!(matches!(
            model.predict(&[0.0]),
            Err(KrdaError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn support_vector_deep_in_class_keeps_its_class() {
        let train = tiny(vec![vec![-3.0, 0.0], vec![3.0, 0.0]], vec![0, 1]);
        let model = svm_fit(&train, 1.0, Gamma::Auto, 8).unwrap();
        assert_eq!(model.predict(&[-3.0, 0.0]).unwrap(), 0);
        assert_eq!(model.predict(&[3.0, 0.0]).unwrap(), 1);
    }

    #[test]
    fn midpoint_of_symmetric_model_has_zero_decision_value() {
        let train = tiny(vec![vec![-1.0, 0.0], vec![1.0, 0.0]], vec![0, 1]);
        let model = svm_fit(&train, 1.0, Gamma::Auto, 9).unwrap();
        let v = model.decision_function(&[0.0, 0.0]).unwrap();
        assert!(v.abs() <= 1e-9, "decision value {v}");
        // Exact zero maps to class 1.
        assert_eq!(model.predict(&[0.0, 0.0]).unwrap(), 1);
    }

    #[test]
    fn label_flip_flips_every_prediction() {
        let train = gen_moons(&MoonsSpec {
            n: 200,
            noise_std: 0.1,
            rotation_deg: 0.0,
            seed: 10,
        });
        let flipped = Dataset::from_rows(
            train.rows().map(|r| r.to_vec()).collect(),
            Some(train.labels().unwrap().iter().map(|&l| 1 - l).collect()),
        )
        .unwrap();
        let a = svm_fit(&train, 1.0, Gamma::Auto, 11).unwrap();
        let b = svm_fit(&flipped, 1.0, Gamma::Auto, 11).unwrap();
        let test = gen_moons(&MoonsSpec {
            n: 100,
            noise_std: 0.1,
            rotation_deg: 0.0,
            seed: 12,
        });
        for row in test.rows() {
            assert_eq!(
                a.predict(row).unwrap(),
                1 - b.predict(row).unwrap(),
                "at {row:?}"
            );
        }
    }

    #[test]
    fn duplicating_rows_leaves_predictions_unchanged() {
        let train = tiny(
            vec![
                vec![-2.0, 0.5],
                vec![-1.5, -0.5],
                vec![1.8, 0.4],
                vec![2.3, -0.6],
            ],
            vec![0, 0, 1, 1],
        );
        let mut rows2: Vec<Vec<f64>> = train.rows().map(|r| r.to_vec()).collect();
        rows2.extend(train.rows().map(|r| r.to_vec()));
        let mut labels2 = train.labels().unwrap().to_vec();
        labels2.extend_from_slice(train.labels().unwrap());
        let doubled = Dataset::from_rows(rows2, Some(labels2)).unwrap();

        let a = svm_fit(&train, 1.0, Gamma::Auto, 13).unwrap();
        let b = svm_fit(&doubled, 1.0, Gamma::Auto, 13).unwrap();
        for gx in -8..=8 {
            for gy in -4..=4 {
                let p = [gx as f64 * 0.5, gy as f64 * 0.5];
                // Skip points within solver tolerance of the boundary;
                // predictions there are legitimately tie-broken.
                if a.decision_function(&p).unwrap().abs() < 1e-3 {
                    continue;
                }
                assert_eq!(a.predict(&p).unwrap(), b.predict(&p).unwrap(), "at {p:?}");
            }
        }
    }

    #[test]
    fn auto_gamma_matches_formula() {
        let train = tiny(
            vec![vec![0.0, 0.0], vec![2.0, 4.0], vec![4.0, 8.0]],
            vec![0, 1, 1],
        );
        // Column variances: 8/3 and 32/3; mean 20/3; gamma = 1/(2 * 20/3).
        let g = auto_gamma(&train);
        assert!((g - 3.0 / 40.0).abs() < 1e-12, "gamma {g}");
    }

    #[test]
    fn single_class_data_is_rejected() {
        let train = tiny(vec![vec![0.0], vec![1.0]], vec![1, 1]);
        assert!(matches!(
            svm_fit(&train, 1.0, Gamma::Auto, 14),
            Err(KrdaError::SingleClassData)
        ));
    }

    #[test]
    fn constant_predictor_scores_half_on_balanced_data() {
        // A model whose bias dominates predicts class 1 everywhere.
        let model = SvmModel {
            support_vectors: vec![0.0, 0.0],
            dual_coefs: vec![0.0],
            bias: 10.0,
            gamma: 1.0,
            c: 1.0,
            n_features: 2,
        };
        let test = tiny(
            vec![
                vec![0.0, 1.0],
                vec![1.0, 0.0],
                vec![2.0, 2.0],
                vec![3.0, 1.0],
            ],
            vec![0, 1, 0, 1],
        );
        assert_eq!(model.accuracy(&test).unwrap(), 0.5);
    }

    #[test]
    fn accuracy_rejects_unlabeled_or_empty_data() {
        let model = SvmModel {
            support_vectors: vec![0.0],
            dual_coefs: vec![1.0],
            bias: 0.0,
            gamma: 1.0,
            c: 1.0,
            n_features: 1,
        };
        let unlabeled = Dataset::from_rows(vec![vec![1.0]], None).unwrap();
        assert!(model.accuracy(&unlabeled).is_err());
        let empty = tiny(vec![], vec![]);
        assert!(model.accuracy(&empty).is_err());
    }

    #[test]
    fn json_round_trip_preserves_decision_values() {
        let train = tiny(
            vec![
                vec![-1.0, 0.2],
                vec![1.0, -0.3],
                vec![0.5, 1.0],
                vec![-0.5, -1.0],
            ],
            vec![0, 1, 1, 0],
        );
        let model = svm_fit(&train, 1.0, Gamma::Auto, 15).unwrap();
        let back = SvmModel::from_json(&model.to_json().unwrap()).unwrap();
        let v1 = model.decision_function(&[0.3, 0.4]).unwrap();
        let v2 = back.decision_function(&[0.3, 0.4]).unwrap();
        assert_eq!(v1.to_bits(), v2.to_bits());
    }
}
