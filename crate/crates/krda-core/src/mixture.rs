//! Exact probability calculus for one-dimensional Gaussian mixtures:
//! density, log-density, CDF, pseudo-inverse CDF, and sampling.
//!
//! The pseudo-inverse follows the generalized quantile definition
//! `F^-1(q) = inf { z : F(z) > q }` and is computed by bisection on a
//! sign-changing bracket `[-2^k, 2^k]`, growing `k` until the bracket
//! holds. Quantile arguments are clipped to `[eps, 1 - eps]` with
//! `eps = 1e-8` before inversion.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KrdaError, Result};

/// Lower bound applied to every mixture standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Quantiles are clipped to `[Q_CLIP_EPSILON, 1 - Q_CLIP_EPSILON]`
/// before CDF inversion.
pub const Q_CLIP_EPSILON: f64 = 1e-8;

/// Residual tolerance `|F(z) - q|` for the bisection stop rule.
const BISECT_VALUE_TOL: f64 = 1e-10;
/// Bracket-width tolerance, relative to `max(1, |z|)`.
const BISECT_WIDTH_REL_TOL: f64 = 1e-12;
/// Hard cap on bisection iterations.
const BISECT_MAX_ITERS: usize = 200;
/// Largest exponent tried when growing the bracket `[-2^k, 2^k]`.
const BRACKET_MAX_EXPONENT: i32 = 64;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;
const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// One conditional factor: a convex combination of `N` Gaussians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture1D {
    weights: Vec<f64>,
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl GaussianMixture1D {
    /// Build a mixture, validating the invariants: weights nonnegative and
    /// summing to 1 within 1e-12, every std at least [`SIGMA_FLOOR`], and
    /// at least one component.
    pub fn new(weights: Vec<f64>, means: Vec<f64>, stds: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(KrdaError::InvalidMixture("no components".into()));
        }
        if weights.len() != means.len() || weights.len() != stds.len() {
            return Err(KrdaError::InvalidMixture(format!(
                "component count mismatch: {} weights, {} means, {} stds",
                weights.len(),
                means.len(),
                stds.len()
            )));
        }
        let mut sum = 0.0;
        for (k, &w) in weights.iter().enumerate() {
            if !(w >= 0.0) {
                return Err(KrdaError::InvalidMixture(format!(
                    "weight {k} is {w}, must be >= 0"
                )));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(KrdaError::InvalidMixture(format!(
                "weights sum to {sum}, must be 1 within 1e-12"
            )));
        }
        for (k, &m) in means.iter().enumerate() {
            if !m.is_finite() {
                return Err(KrdaError::InvalidMixture(format!("mean {k} is {m}")));
            }
        }
        for (k, &s) in stds.iter().enumerate() {
            if !(s >= SIGMA_FLOOR) || !s.is_finite() {
                return Err(KrdaError::InvalidMixture(format!(
                    "std {k} is {s}, must be finite and >= {SIGMA_FLOOR}"
                )));
            }
        }
        Ok(Self {
            weights,
            means,
            stds,
        })
    }

    /// Build without validating. The caller must uphold the invariants;
    /// the network output path guarantees them by construction (softmax
    /// weights, floored stds).
    pub(crate) fn new_unchecked(weights: Vec<f64>, means: Vec<f64>, stds: Vec<f64>) -> Self {
        debug_assert_eq!(weights.len(), means.len());
        debug_assert_eq!(weights.len(), stds.len());
        debug_assert!(stds.iter().all(|&s| s >= SIGMA_FLOOR));
        Self {
            weights,
            means,
            stds,
        }
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn stds(&self) -> &[f64] {
        &self.stds
    }

    /// Mixture density `sum_k w_k phi((x - mu_k)/sigma_k) / sigma_k`.
    pub fn pdf(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.weights.len() {
            let z = (x - self.means[k]) / self.stds[k];
            acc += self.weights[k] * (-0.5 * z * z).exp()
                / (self.stds[k] * (2.0 * std::f64::consts::PI).sqrt());
        }
        acc
    }

    /// Log-density via log-sum-exp over per-component log terms. Stays
    /// finite for any finite `x` (saturating at `f64::MIN` rather than
    /// returning negative infinity).
    pub fn log_pdf(&self, x: f64) -> f64 {
        let terms: Vec<f64> = (0..self.weights.len())
            .map(|k| {
                let z = (x - self.means[k]) / self.stds[k];
                self.weights[k].ln() - 0.5 * z * z - self.stds[k].ln() - LN_SQRT_2PI
            })
            .collect();
        let l = log_sum_exp(&terms);
        if l == f64::NEG_INFINITY {
            f64::MIN
        } else {
            l
        }
    }

    /// Mixture CDF by linearity: `sum_k w_k F_N(mu_k, sigma_k)(x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.weights.len() {
            acc += self.weights[k] * std_normal_cdf((x - self.means[k]) / self.stds[k]);
        }
        acc
    }

    /// Pseudo-inverse CDF at `q`, clipped to `[1e-8, 1 - 1e-8]`.
    ///
    /// Bisection runs until the value residual is within 1e-10 *and* the
    /// bracket width is within 1e-12 relative to `max(1, |z|)`; if the
    /// bracket collapses to adjacent floats first, the evaluated point
    /// with the smallest residual is returned (the best f64 can do).
    /// Either exit satisfies the contract `|F(z) - q| <= 1e-10` or
    /// `width <= 1e-12 * max(1, |z|)`.
    pub fn inverse_cdf(&self, q: f64) -> Result<f64> {
        let q = q.clamp(Q_CLIP_EPSILON, 1.0 - Q_CLIP_EPSILON);

        let mut bracket = None;
        for k in 0..=BRACKET_MAX_EXPONENT {
            let hi = 2.0f64.powi(k);
            if self.cdf(-hi) < q && self.cdf(hi) > q {
                bracket = Some((-hi, hi));
                break;
            }
        }
        let (mut lo, mut hi) = bracket.ok_or(KrdaError::BracketNotFound { q })?;

        let mut best = 0.5 * (lo + hi);
        let mut best_resid = f64::INFINITY;
        for _ in 0..BISECT_MAX_ITERS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                // Bracket narrowed to adjacent floats; no midpoint exists.
                break;
            }
            let f = self.cdf(mid);
            let resid = (f - q).abs();
            if resid < best_resid {
                best = mid;
                best_resid = resid;
            }
            if resid <= BISECT_VALUE_TOL
                && (hi - lo) <= BISECT_WIDTH_REL_TOL * mid.abs().max(1.0)
            {
                return Ok(mid);
            }
            if f > q {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(best)
    }

    /// Ancestral draw: pick component `k` with probability `w_k`, then
    /// sample `N(mu_k, sigma_k)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        let mut cum = 0.0;
        let mut idx = self.weights.len() - 1;
        for (k, &w) in self.weights.iter().enumerate() {
            cum += w;
            if u < cum {
                idx = k;
                break;
            }
        }
        self.means[idx] + self.stds[idx] * sample_std_normal(rng)
    }
}

/// Standard normal draw via Box-Muller; deterministic given the RNG stream.
pub(crate) fn sample_std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // u1 in (0, 1] so the log is finite.
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Standard normal CDF `Phi(z)`, absolute error below 1e-12.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// `log(sum_k exp(t_k))` with max subtraction; ignores -inf terms.
pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = terms.iter().map(|&t| (t - m).exp()).sum();
    m + sum.ln()
}

// Rational minimax approximation of erf/erfc after W. J. Cody,
// "Rational Chebyshev approximation for the error function" (the
// SPECFUN coefficients); relative error below 1.5e-16 away from the
// underflow region.

const ERF_A: [f64; 5] = [
    3.161_123_743_870_565_6e0,
    1.138_641_541_510_501_56e2,
    3.774_852_376_853_020_2e2,
    3.209_377_589_138_469_47e3,
    1.857_777_061_846_031_53e-1,
];
const ERF_B: [f64; 4] = [
    2.360_129_095_234_412_09e1,
    2.440_246_379_344_441_73e2,
    1.282_616_526_077_372_28e3,
    2.844_236_833_439_170_62e3,
];
const ERF_C: [f64; 9] = [
    5.641_884_969_886_700_89e-1,
    8.883_149_794_388_375_94e0,
    6.611_919_063_714_162_95e1,
    2.986_351_381_974_001_31e2,
    8.819_522_212_417_690_9e2,
    1.712_047_612_634_070_58e3,
    2.051_078_377_826_071_47e3,
    1.230_339_354_797_997_25e3,
    2.153_115_354_744_038_46e-8,
];
const ERF_D: [f64; 8] = [
    1.574_492_611_070_983_47e1,
    1.176_939_508_913_124_99e2,
    5.371_811_018_620_098_58e2,
    1.621_389_574_566_690_19e3,
    3.290_799_235_733_459_63e3,
    4.362_619_090_143_247_16e3,
    3.439_367_674_143_721_64e3,
    1.230_339_354_803_749_42e3,
];
const ERF_P: [f64; 6] = [
    3.053_266_349_612_323_44e-1,
    3.603_448_999_498_044_39e-1,
    1.257_817_261_112_292_46e-1,
    1.608_378_514_874_227_66e-2,
    6.587_491_615_298_378_03e-4,
    1.631_538_713_730_209_78e-2,
];
const ERF_Q: [f64; 5] = [
    2.568_520_192_289_822_42e0,
    1.872_952_849_923_460_47e0,
    5.279_051_029_514_284_12e-1,
    6.051_834_131_244_131_91e-2,
    2.335_204_976_268_691_85e-3,
];
const ONE_OVER_SQRT_PI: f64 = 5.641_895_835_477_562_9e-1;

fn erf(x: f64) -> f64 {
    let y = x.abs();
    if y <= 0.46875 {
        let z = if y > 1.11e-16 { y * y } else { 0.0 };
        let mut num = ERF_A[4] * z;
        let mut den = z;
        for i in 0..3 {
            num = (num + ERF_A[i]) * z;
            den = (den + ERF_B[i]) * z;
        }
        x * (num + ERF_A[3]) / (den + ERF_B[3])
    } else if x > 0.0 {
        1.0 - erfc(x)
    } else {
        erfc(-x) - 1.0
    }
}

/// Complementary error function.
pub(crate) fn erfc(x: f64) -> f64 {
    let y = x.abs();
    let result = if y <= 0.46875 {
        return 1.0 - erf(x);
    } else if y <= 4.0 {
        let mut num = ERF_C[8] * y;
        let mut den = y;
        for i in 0..7 {
            num = (num + ERF_C[i]) * y;
            den = (den + ERF_D[i]) * y;
        }
        let r = (num + ERF_C[7]) / (den + ERF_D[7]);
        // Split exp(-y^2) to keep accuracy for larger y.
        let ysq = (y * 16.0).floor() / 16.0;
        let delt = (y - ysq) * (y + ysq);
        (-ysq * ysq).exp() * (-delt).exp() * r
    } else if y < 26.6 {
        let inv = 1.0 / (y * y);
        let mut num = ERF_P[5] * inv;
        let mut den = inv;
        for i in 0..4 {
            num = (num + ERF_P[i]) * inv;
            den = (den + ERF_Q[i]) * inv;
        }
        let mut r = inv * (num + ERF_P[4]) / (den + ERF_Q[4]);
        r = (ONE_OVER_SQRT_PI - r) / y;
        let ysq = (y * 16.0).floor() / 16.0;
        let delt = (y - ysq) * (y + ysq);
        (-ysq * ysq).exp() * (-delt).exp() * r
    } else {
        // erfc underflows past ~26.55 in f64.
        0.0
    };
    if x < 0.0 {
        2.0 - result
    } else {
        result
    }
}
