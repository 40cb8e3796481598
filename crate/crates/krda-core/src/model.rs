//! Autoregressive mixture density network with a shared backbone and
//! per-domain output heads.
//!
//! The joint density factorizes over components via the probability
//! chain rule; hidden activations follow the additive recurrence
//! `a^1 = c`, `a^{i+1} = a^i + x^i W_col_i`, so the mixture emitted for
//! component `i` depends only on `x^{<i}` (triangularity). Each factor's
//! head applies a learned scalar rescale, a relu, and three affine maps
//! producing mixture weights (softmax), means, and log-variances
//! (`sigma = exp(0.5 * logvar)`, floored).
//!
//! Gradients are computed analytically; `relu'(0)` is taken as 0, and a
//! floored sigma contributes zero gradient to its log-variance output.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Standardizer;
use crate::error::{KrdaError, Result};
use crate::mixture::{log_sum_exp, GaussianMixture1D, SIGMA_FLOOR};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// Serialization format version written into every model document.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Which domain head to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    Source,
    Target,
}

/// Shared recurrence parameters: initial activation `c` and the
/// per-component update columns of `W` (stored row-major, H x d).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Backbone {
    pub c: Vec<f64>,
    pub w: Vec<f64>,
}

impl Backbone {
    pub fn zeros(hidden: usize, d: usize) -> Self {
        Self {
            c: vec![0.0; hidden],
            w: vec![0.0; hidden * d],
        }
    }

    pub(crate) fn blocks(&self) -> [&Vec<f64>; 2] {
        [&self.c, &self.w]
    }

    pub(crate) fn blocks_mut(&mut self) -> [&mut Vec<f64>; 2] {
        [&mut self.c, &mut self.w]
    }
}

/// Affine map `R^H -> R^N` with bias; weights row-major (N x H).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Affine {
    pub fn zeros(n_out: usize, n_in: usize) -> Self {
        Self {
            weight: vec![0.0; n_out * n_in],
            bias: vec![0.0; n_out],
        }
    }

    fn forward(&self, input: &[f64], out: &mut [f64]) {
        let n_in = input.len();
        for (k, o) in out.iter_mut().enumerate() {
            let row = &self.weight[k * n_in..(k + 1) * n_in];
            let mut acc = self.bias[k];
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            *o = acc;
        }
    }
}

/// Per-domain parameters: one rescale scalar per component index and the
/// three output maps for mixture weights, means, and log-variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainHead {
    pub rescale: Vec<f64>,
    pub out_w: Affine,
    pub out_mu: Affine,
    pub out_logvar: Affine,
}

impl DomainHead {
    pub fn zeros(hidden: usize, components: usize, d: usize) -> Self {
        Self {
            rescale: vec![0.0; d],
            out_w: Affine::zeros(components, hidden),
            out_mu: Affine::zeros(components, hidden),
            out_logvar: Affine::zeros(components, hidden),
        }
    }

    pub(crate) fn blocks(&self) -> [&Vec<f64>; 7] {
        [
            &self.rescale,
            &self.out_w.weight,
            &self.out_w.bias,
            &self.out_mu.weight,
            &self.out_mu.bias,
            &self.out_logvar.weight,
            &self.out_logvar.bias,
        ]
    }

    pub(crate) fn blocks_mut(&mut self) -> [&mut Vec<f64>; 7] {
        [
            &mut self.rescale,
            &mut self.out_w.weight,
            &mut self.out_w.bias,
            &mut self.out_mu.weight,
            &mut self.out_mu.bias,
            &mut self.out_logvar.weight,
            &mut self.out_logvar.bias,
        ]
    }
}

/// The full two-domain density model, including the standardization
/// statistics it was trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrdaModel {
    pub d: usize,
    pub hidden: usize,
    pub components: usize,
    pub backbone: Backbone,
    pub source_head: DomainHead,
    pub target_head: DomainHead,
    pub standardizer: Standardizer,
}

/// Hidden activations `a^1..a^d` for one input, stored flat.
pub struct Activations {
    a: Vec<f64>,
    hidden: usize,
}

impl Activations {
    /// Activation for component `i` (0-based).
    pub fn a_i(&self, i: usize) -> &[f64] {
        &self.a[i * self.hidden..(i + 1) * self.hidden]
    }

    pub fn len(&self) -> usize {
        self.a.len() / self.hidden.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

/// Gradient of the mean log-likelihood with respect to the backbone and
/// the selected domain head; fields mirror the parameter structures.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub backbone: Backbone,
    pub head: DomainHead,
}

impl KrdaModel {
    /// Random initialization: `c = 0`, weights uniform in
    /// `(-1/sqrt(H), 1/sqrt(H))`, rescale scalars 1, weight/log-variance
    /// biases 0. Mean biases are drawn uniform in (-1, 1): identical
    /// components receive identical gradients and would otherwise move
    /// in lockstep forever (the first factor's hidden input is all-zero
    /// at this init, so nothing else breaks the tie). The starting
    /// density stays within O(1) of the standard-normal product.
    pub fn init<R: Rng + ?Sized>(
        d: usize,
        hidden: usize,
        components: usize,
        standardizer: Standardizer,
        rng: &mut R,
    ) -> Self {
        assert!(d >= 1 && hidden >= 1 && components >= 1);
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut uniform = |len: usize, b: f64| -> Vec<f64> {
            (0..len).map(|_| rng.gen_range(-b..b)).collect()
        };
        let backbone = Backbone {
            c: vec![0.0; hidden],
            w: uniform(hidden * d, bound),
        };
        let head = |uniform: &mut dyn FnMut(usize, f64) -> Vec<f64>| DomainHead {
            rescale: vec![1.0; d],
            out_w: Affine {
                weight: uniform(components * hidden, bound),
                bias: vec![0.0; components],
            },
            out_mu: Affine {
                weight: uniform(components * hidden, bound),
                bias: uniform(components, 1.0),
            },
            out_logvar: Affine {
                weight: uniform(components * hidden, bound),
                bias: vec![0.0; components],
            },
        };
        let source_head = head(&mut uniform);
        let target_head = head(&mut uniform);
        Self {
            d,
            hidden,
            components,
            backbone,
            source_head,
            target_head,
            standardizer,
        }
    }

    pub fn head(&self, domain: Domain) -> &DomainHead {
        match domain {
            Domain::Source => &self.source_head,
            Domain::Target => &self.target_head,
        }
    }

    pub fn head_mut(&mut self, domain: Domain) -> &mut DomainHead {
        match domain {
            Domain::Source => &mut self.source_head,
            Domain::Target => &mut self.target_head,
        }
    }

    fn check_dim(&self, len: usize, context: &'static str) -> Result<()> {
        if len != self.d {
            return Err(KrdaError::DimensionMismatch {
                context,
                expected: self.d,
                got: len,
            });
        }
        Ok(())
    }

    /// Hidden activations `a^1..a^d`; `a^i` depends only on `x^{<i}`.
    pub fn forward_activations(&self, x: &[f64]) -> Result<Activations> {
        self.check_dim(x.len(), "forward_activations input")?;
        let h = self.hidden;
        let mut a = vec![0.0; self.d * h];
        a[..h].copy_from_slice(&self.backbone.c);
        for i in 1..self.d {
            let (prev, cur) = a.split_at_mut(i * h);
            let prev = &prev[(i - 1) * h..];
            let col = i - 1;
            for hh in 0..h {
                cur[hh] = prev[hh] + x[col] * self.backbone.w[hh * self.d + col];
            }
        }
        Ok(Activations { a, hidden: h })
    }

    /// The conditional Gaussian mixture for component `i` (0-based),
    /// given the earlier components of `x`. Entries of `x` at positions
    /// `>= i` never influence the result.
    pub fn conditional_mixture(
        &self,
        domain: Domain,
        x: &[f64],
        i: usize,
    ) -> Result<GaussianMixture1D> {
        self.check_dim(x.len(), "conditional_mixture input")?;
        if i >= self.d {
            return Err(KrdaError::DimensionMismatch {
                context: "conditional_mixture component index",
                expected: self.d,
                got: i,
            });
        }
        let acts = self.forward_activations(x)?;
        Ok(self.mixture_from_activation(self.head(domain), acts.a_i(i), i))
    }

    /// Mixture parameters for factor `i` from its hidden activation.
    pub(crate) fn mixture_from_activation(
        &self,
        head: &DomainHead,
        a_i: &[f64],
        i: usize,
    ) -> GaussianMixture1D {
        let n = self.components;
        let mut h = vec![0.0; self.hidden];
        for (hh, &av) in h.iter_mut().zip(a_i) {
            let u = head.rescale[i] * av;
            *hh = if u > 0.0 { u } else { 0.0 };
        }
        let mut sw = vec![0.0; n];
        let mut mu = vec![0.0; n];
        let mut lv = vec![0.0; n];
        head.out_w.forward(&h, &mut sw);
        head.out_mu.forward(&h, &mut mu);
        head.out_logvar.forward(&h, &mut lv);
        let m = sw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut weights: Vec<f64> = sw.iter().map(|&s| (s - m).exp()).collect();
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        let stds = lv.iter().map(|&l| (0.5 * l).exp().max(SIGMA_FLOOR)).collect();
        GaussianMixture1D::new_unchecked(weights, mu, stds)
    }

    /// Exact log-likelihood: the sum of per-factor conditional mixture
    /// log-densities.
    pub fn log_likelihood(&self, domain: Domain, x: &[f64]) -> Result<f64> {
        self.check_dim(x.len(), "log_likelihood input")?;
        let acts = self.forward_activations(x)?;
        let head = self.head(domain);
        let mut total = 0.0;
        for i in 0..self.d {
            let mixture = self.mixture_from_activation(head, acts.a_i(i), i);
            total += mixture.log_pdf(x[i]);
        }
        Ok(total)
    }

    /// Mean log-likelihood over a flat row-major batch. Equivalent to
    /// averaging [`Self::log_likelihood`] over the rows, but fused and
    /// allocation-free per row; this is the evaluation path the trainer
    /// runs at every epoch end.
    pub fn mean_log_likelihood(&self, domain: Domain, batch: &[f64]) -> Result<f64> {
        if batch.len() % self.d != 0 || batch.is_empty() {
            return Err(KrdaError::DimensionMismatch {
                context: "mean_log_likelihood batch",
                expected: self.d,
                got: batch.len(),
            });
        }
        let (d, hd, n) = (self.d, self.hidden, self.components);
        let head = self.head(domain);
        let mut a = vec![0.0; hd];
        let mut h = vec![0.0; hd];
        let mut sw = vec![0.0; n];
        let mut mu = vec![0.0; n];
        let mut lv = vec![0.0; n];
        let mut terms = vec![0.0; n];
        let mut total = 0.0;
        for row in batch.chunks_exact(d) {
            a.copy_from_slice(&self.backbone.c);
            for i in 0..d {
                let r_i = head.rescale[i];
                for hh in 0..hd {
                    let u = r_i * a[hh];
                    h[hh] = if u > 0.0 { u } else { 0.0 };
                }
                head.out_w.forward(&h, &mut sw);
                head.out_mu.forward(&h, &mut mu);
                head.out_logvar.forward(&h, &mut lv);
                let m = sw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let log_wsum = sw.iter().map(|&s| (s - m).exp()).sum::<f64>().ln();
                for k in 0..n {
                    let sigma = (0.5 * lv[k]).exp().max(SIGMA_FLOOR);
                    let z = (row[i] - mu[k]) / sigma;
                    terms[k] = sw[k] - m - log_wsum - 0.5 * z * z - sigma.ln() - LN_SQRT_2PI;
                }
                let ell = log_sum_exp(&terms);
                total += if ell == f64::NEG_INFINITY { f64::MIN } else { ell };
                if i + 1 < d {
                    for hh in 0..hd {
                        a[hh] += row[i] * self.backbone.w[hh * d + i];
                    }
                }
            }
        }
        Ok(total / (batch.len() / d) as f64)
    }

    /// Analytic gradient of the mean log-likelihood over a flat
    /// row-major batch, with respect to the backbone and the selected
    /// head. Returns `(mean_log_likelihood, gradients)`.
    pub fn log_likelihood_grad(
        &self,
        domain: Domain,
        batch: &[f64],
    ) -> Result<(f64, Gradients)> {
        if batch.len() % self.d != 0 || batch.is_empty() {
            return Err(KrdaError::DimensionMismatch {
                context: "log_likelihood_grad batch",
                expected: self.d,
                got: batch.len(),
            });
        }
        let (d, hd, n) = (self.d, self.hidden, self.components);
        let head = self.head(domain);
        let n_rows = batch.len() / d;

        let mut g_backbone = Backbone::zeros(hd, d);
        let mut g_head = DomainHead::zeros(hd, n, d);
        let mut total_ll = 0.0;

        // Per-row scratch buffers, reused across rows.
        let mut a = vec![0.0; hd];
        let mut h = vec![0.0; hd];
        let mut mask = vec![false; hd];
        let mut sw = vec![0.0; n];
        let mut mu = vec![0.0; n];
        let mut lv = vec![0.0; n];
        let mut sigma = vec![0.0; n];
        let mut floored = vec![false; n];
        let mut z_buf = vec![0.0; n];
        let mut terms = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let mut dsw = vec![0.0; n];
        let mut dmu = vec![0.0; n];
        let mut dlv = vec![0.0; n];
        let mut delta_h = vec![0.0; hd];
        let mut delta_a = vec![0.0; d * hd];

        for row in batch.chunks_exact(d) {
            a.copy_from_slice(&self.backbone.c);
            for i in 0..d {
                let r_i = head.rescale[i];
                for hh in 0..hd {
                    let u = r_i * a[hh];
                    mask[hh] = u > 0.0;
                    h[hh] = if mask[hh] { u } else { 0.0 };
                }
                head.out_w.forward(&h, &mut sw);
                head.out_mu.forward(&h, &mut mu);
                head.out_logvar.forward(&h, &mut lv);

                let m = sw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut wsum = 0.0;
                for k in 0..n {
                    weights[k] = (sw[k] - m).exp();
                    wsum += weights[k];
                }
                let log_wsum = wsum.ln();
                for k in 0..n {
                    weights[k] /= wsum;
                    let sigma_raw = (0.5 * lv[k]).exp();
                    floored[k] = sigma_raw < SIGMA_FLOOR;
                    sigma[k] = if floored[k] { SIGMA_FLOOR } else { sigma_raw };
                    z_buf[k] = (row[i] - mu[k]) / sigma[k];
                    let log_w = sw[k] - m - log_wsum;
                    terms[k] = log_w - 0.5 * z_buf[k] * z_buf[k] - sigma[k].ln() - LN_SQRT_2PI;
                }
                let ell = log_sum_exp(&terms);
                total_ll += ell;

                for k in 0..n {
                    let g_k = (terms[k] - ell).exp();
                    let z = z_buf[k];
                    dsw[k] = g_k - weights[k];
                    dmu[k] = g_k * z / sigma[k];
                    dlv[k] = if floored[k] {
                        0.0
                    } else {
                        0.5 * g_k * (z * z - 1.0)
                    };
                }

                // delta_h = out_w^T dsw + out_mu^T dmu + out_logvar^T dlv
                delta_h.iter_mut().for_each(|v| *v = 0.0);
                accumulate_transpose(&head.out_w.weight, &dsw, &mut delta_h);
                accumulate_transpose(&head.out_mu.weight, &dmu, &mut delta_h);
                accumulate_transpose(&head.out_logvar.weight, &dlv, &mut delta_h);

                // Head gradients for this factor.
                accumulate_outer(&mut g_head.out_w.weight, &dsw, &h);
                accumulate_outer(&mut g_head.out_mu.weight, &dmu, &h);
                accumulate_outer(&mut g_head.out_logvar.weight, &dlv, &h);
                for k in 0..n {
                    g_head.out_w.bias[k] += dsw[k];
                    g_head.out_mu.bias[k] += dmu[k];
                    g_head.out_logvar.bias[k] += dlv[k];
                }

                let da = &mut delta_a[i * hd..(i + 1) * hd];
                let mut r_grad = 0.0;
                for hh in 0..hd {
                    let du = if mask[hh] { delta_h[hh] } else { 0.0 };
                    r_grad += du * a[hh];
                    da[hh] = r_i * du;
                }
                g_head.rescale[i] += r_grad;

                if i + 1 < d {
                    for hh in 0..hd {
                        a[hh] += row[i] * self.backbone.w[hh * d + i];
                    }
                }
            }

            // Backbone gradients: W column j collects the activation
            // deltas of every later factor; c collects them all.
            let mut suffix = vec![0.0; hd];
            for i in (0..d).rev() {
                if i + 1 < d {
                    // Column i only feeds factors > i; for i = d-1 the
                    // update is never used and the gradient stays zero.
                    for hh in 0..hd {
                        g_backbone.w[hh * d + i] += row[i] * suffix[hh];
                    }
                }
                let da = &delta_a[i * hd..(i + 1) * hd];
                for hh in 0..hd {
                    suffix[hh] += da[hh];
                }
            }
            for hh in 0..hd {
                g_backbone.c[hh] += suffix[hh];
            }
        }

        let scale = 1.0 / n_rows as f64;
        for block in g_backbone.blocks_mut() {
            for v in block.iter_mut() {
                *v *= scale;
            }
        }
        for block in g_head.blocks_mut() {
            for v in block.iter_mut() {
                *v *= scale;
            }
        }
        Ok((
            total_ll * scale,
            Gradients {
                backbone: g_backbone,
                head: g_head,
            },
        ))
    }

    /// Ancestral sampling in model (standardized) coordinates.
    pub fn sample<R: Rng + ?Sized>(&self, domain: Domain, rng: &mut R) -> Vec<f64> {
        let head = self.head(domain);
        let mut a = self.backbone.c.clone();
        let mut x = vec![0.0; self.d];
        for i in 0..self.d {
            let mixture = self.mixture_from_activation(head, &a, i);
            x[i] = mixture.sample(rng);
            if i + 1 < self.d {
                for hh in 0..self.hidden {
                    a[hh] += x[i] * self.backbone.w[hh * self.d + i];
                }
            }
        }
        x
    }

    /// Check that all parameter arrays have the advertised shapes.
    pub fn validate(&self) -> Result<()> {
        let (d, hd, n) = (self.d, self.hidden, self.components);
        let expect = |context: &'static str, expected: usize, got: usize| -> Result<()> {
            if expected != got {
                Err(KrdaError::DimensionMismatch {
                    context,
                    expected,
                    got,
                })
            } else {
                Ok(())
            }
        };
        if d < 1 || hd < 1 || n < 1 {
            return Err(KrdaError::InvalidConfig(
                "model dimensions must be at least 1".into(),
            ));
        }
        expect("backbone c", hd, self.backbone.c.len())?;
        expect("backbone w", hd * d, self.backbone.w.len())?;
        for head in [&self.source_head, &self.target_head] {
            expect("head rescale", d, head.rescale.len())?;
            for aff in [&head.out_w, &head.out_mu, &head.out_logvar] {
                expect("head affine weight", n * hd, aff.weight.len())?;
                expect("head affine bias", n, aff.bias.len())?;
            }
        }
        expect("standardizer", d, self.standardizer.n_cols())?;
        Ok(())
    }

    /// Serialize to a self-describing JSON document. Floats are written
    /// in shortest round-trip form, so `load` reproduces them bit-exactly.
    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDocument {
            format_version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(KrdaError::InvalidConfig(format!(
                "unsupported model format version {} (expected {})",
                doc.format_version, MODEL_FORMAT_VERSION
            )));
        }
        doc.model.validate()?;
        Ok(doc.model)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format_version: u32,
    #[serde(flatten)]
    model: KrdaModel,
}

/// `delta += weight^T d` for a row-major (N x H) weight matrix.
fn accumulate_transpose(weight: &[f64], d: &[f64], delta: &mut [f64]) {
    let h = delta.len();
    for (k, &dk) in d.iter().enumerate() {
        if dk == 0.0 {
            continue;
        }
        let row = &weight[k * h..(k + 1) * h];
        for (dh, w) in delta.iter_mut().zip(row) {
            *dh += dk * w;
        }
    }
}

/// `grad += d (outer) h` for a row-major (N x H) gradient matrix.
fn accumulate_outer(grad: &mut [f64], d: &[f64], h: &[f64]) {
    let hd = h.len();
    for (k, &dk) in d.iter().enumerate() {
        if dk == 0.0 {
            continue;
        }
        let row = &mut grad[k * hd..(k + 1) * hd];
        for (g, hv) in row.iter_mut().zip(h) {
            *g += dk * hv;
        }
    }
}
