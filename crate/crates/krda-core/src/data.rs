//! Dataset representation, synthetic generators, CSV ingestion,
//! standardization, and seeded subsampling.
//!
//! All generators are pure functions of their spec (seed included):
//! identical specs produce identical datasets.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KrdaError, Result};
use crate::mixture::sample_std_normal;

/// Name of the optional class column in CSV files.
pub const LABEL_COLUMN: &str = "label";

/// Row-major real matrix with optional binary labels and column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
    labels: Option<Vec<u8>>,
    column_names: Vec<String>,
}

impl Dataset {
    /// Build a dataset from a flat row-major feature buffer.
    pub fn new(
        features: Vec<f64>,
        n_rows: usize,
        n_cols: usize,
        labels: Option<Vec<u8>>,
        column_names: Vec<String>,
    ) -> Result<Self> {
        if features.len() != n_rows * n_cols {
            return Err(KrdaError::DimensionMismatch {
                context: "dataset feature buffer",
                expected: n_rows * n_cols,
                got: features.len(),
            });
        }
        if column_names.len() != n_cols {
            return Err(KrdaError::DimensionMismatch {
                context: "dataset column names",
                expected: n_cols,
                got: column_names.len(),
            });
        }
        if let Some(ref l) = labels {
            if l.len() != n_rows {
                return Err(KrdaError::DimensionMismatch {
                    context: "dataset labels",
                    expected: n_rows,
                    got: l.len(),
                });
            }
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(KrdaError::NonFiniteValue {
                row: pos / n_cols,
                column: column_names[pos % n_cols].clone(),
            });
        }
        Ok(Self {
            features,
            n_rows,
            n_cols,
            labels,
            column_names,
        })
    }

    /// Dataset with default column names `x1..xd`.
    pub fn from_rows(rows: Vec<Vec<f64>>, labels: Option<Vec<u8>>) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut features = Vec::with_capacity(n_rows * n_cols);
        for r in &rows {
            if r.len() != n_cols {
                return Err(KrdaError::DimensionMismatch {
                    context: "dataset row",
                    expected: n_cols,
                    got: r.len(),
                });
            }
            features.extend_from_slice(r);
        }
        let names = (1..=n_cols).map(|i| format!("x{i}")).collect();
        Self::new(features, n_rows, n_cols, labels, names)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.n_cols.max(1))
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    /// Replace the feature matrix, keeping labels and names; used when
    /// writing transferred coordinates back over the source rows.
    pub fn with_features(&self, features: Vec<f64>) -> Result<Self> {
        Self::new(
            features,
            self.n_rows,
            self.n_cols,
            self.labels.clone(),
            self.column_names.clone(),
        )
    }

    /// Keep only the rows at `indices`, in the order given.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        Self {
            features,
            n_rows: indices.len(),
            n_cols: self.n_cols,
            labels,
            column_names: self.column_names.clone(),
        }
    }
}

/// Spec for the rotated inter-twinning moons generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MoonsSpec {
    pub n: usize,
    pub noise_std: f64,
    pub rotation_deg: f64,
    pub seed: u64,
}

/// The two arcs: label 0 on the upper unit half-circle centered at the
/// origin; label 1 on the same arc shifted by (1, -0.5) and reflected
/// downward, i.e. the lower half-circle centered at (1, 0.5).
/// Their joint centroid, used as the rotation center.
pub const MOONS_ROTATION_CENTER: (f64, f64) = (0.5, 0.25);

/// Generate an inter-twinning moons dataset: arcs, isotropic Gaussian
/// noise, then rotation about [`MOONS_ROTATION_CENTER`].
pub fn gen_moons(spec: &MoonsSpec) -> Dataset {
    let n0 = spec.n - spec.n / 2; // label 0 gets the extra point for odd n
    let n1 = spec.n / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut rows = Vec::with_capacity(spec.n);
    let mut labels = Vec::with_capacity(spec.n);
    let arc = |i: usize, count: usize| -> f64 {
        if count <= 1 {
            0.0
        } else {
            std::f64::consts::PI * i as f64 / (count - 1) as f64
        }
    };
    for i in 0..n0 {
        let t = arc(i, n0);
        rows.push(vec![t.cos(), t.sin()]);
        labels.push(0u8);
    }
    for i in 0..n1 {
        let t = arc(i, n1);
        rows.push(vec![t.cos() + 1.0, -(t.sin()) + 0.5]);
        labels.push(1u8);
    }
    for row in &mut rows {
        row[0] += spec.noise_std * sample_std_normal(&mut rng);
        row[1] += spec.noise_std * sample_std_normal(&mut rng);
    }
    let theta = spec.rotation_deg.to_radians();
    let (sin, cos) = (theta.sin(), theta.cos());
    let (cx, cy) = MOONS_ROTATION_CENTER;
    for row in &mut rows {
        let (dx, dy) = (row[0] - cx, row[1] - cy);
        row[0] = cx + cos * dx - sin * dy;
        row[1] = cy + sin * dx + cos * dy;
    }
    Dataset::from_rows(rows, Some(labels)).expect("moons rows are rectangular and finite")
}

/// One Gaussian mode of a [`GmmSpec`]: weight, mean vector, and the
/// diagonal of the covariance matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmMode {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub cov_diag: Vec<f64>,
}

/// Spec for a diagonal-covariance Gaussian mixture generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmSpec {
    pub modes: Vec<GmmMode>,
    pub n: usize,
    pub seed: u64,
}

impl GmmSpec {
    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(KrdaError::InvalidConfig("gmm spec has no modes".into()));
        }
        let d = self.modes[0].mean.len();
        let sum: f64 = self.modes.iter().map(|m| m.weight).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(KrdaError::InvalidConfig(format!(
                "gmm mode weights sum to {sum}, must be 1"
            )));
        }
        for m in &self.modes {
            if m.weight < 0.0 {
                return Err(KrdaError::InvalidConfig("negative mode weight".into()));
            }
            if m.mean.len() != d || m.cov_diag.len() != d {
                return Err(KrdaError::InvalidConfig(
                    "gmm modes have inconsistent dimensions".into(),
                ));
            }
            if m.cov_diag.iter().any(|&v| v <= 0.0) {
                return Err(KrdaError::InvalidConfig(
                    "gmm covariance entries must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Ancestral sampling from a diagonal Gaussian mixture; unlabeled.
pub fn gen_gmm(spec: &GmmSpec) -> Result<Dataset> {
    spec.validate()?;
    let d = spec.modes[0].mean.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut rows = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let u: f64 = rng.gen();
        let mut cum = 0.0;
        let mut idx = spec.modes.len() - 1;
        for (k, m) in spec.modes.iter().enumerate() {
            cum += m.weight;
            if u < cum {
                idx = k;
                break;
            }
        }
        let mode = &spec.modes[idx];
        let row = (0..d)
            .map(|j| mode.mean[j] + mode.cov_diag[j].sqrt() * sample_std_normal(&mut rng))
            .collect();
        rows.push(row);
    }
    Dataset::from_rows(rows, None)
}

/// Load a dataset from a UTF-8 CSV file with a header row. A column
/// named `label` (if present) is parsed as the binary class.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    load_csv_reader(file)
}

pub fn load_csv_reader(reader: impl Read) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| KrdaError::ParseError {
            row: 0,
            column: String::new(),
            message: e.to_string(),
        })?
        .clone();
    let label_idx = headers.iter().position(|h| h == LABEL_COLUMN);
    let column_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != label_idx)
        .map(|(_, h)| h.to_string())
        .collect();
    let n_cols = column_names.len();

    let mut features = Vec::new();
    let mut labels: Vec<u8> = Vec::new();
    let mut n_rows = 0usize;
    for (row_idx, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| KrdaError::ParseError {
            row: row_idx + 1,
            column: String::new(),
            message: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(KrdaError::ParseError {
                row: row_idx + 1,
                column: String::new(),
                message: format!("expected {} fields, got {}", headers.len(), record.len()),
            });
        }
        for (col_idx, field) in record.iter().enumerate() {
            let name = &headers[col_idx];
            if Some(col_idx) == label_idx {
                match field.trim() {
                    "0" => labels.push(0),
                    "1" => labels.push(1),
                    other => {
                        return Err(KrdaError::ParseError {
                            row: row_idx + 1,
                            column: name.to_string(),
                            message: format!("label must be 0 or 1, got {other:?}"),
                        })
                    }
                }
            } else {
                let value: f64 = field.trim().parse().map_err(|e| KrdaError::ParseError {
                    row: row_idx + 1,
                    column: name.to_string(),
                    message: format!("{e}"),
                })?;
                if !value.is_finite() {
                    return Err(KrdaError::NonFiniteValue {
                        row: row_idx + 1,
                        column: name.to_string(),
                    });
                }
                features.push(value);
            }
        }
        n_rows += 1;
    }
    let labels = if label_idx.is_some() { Some(labels) } else { None };
    Dataset::new(features, n_rows, n_cols, labels, column_names)
}

/// Write a dataset as CSV. Floats are printed in shortest
/// round-trip form, so `save` then `load` reproduces them bit-exactly.
pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    save_csv_writer(dataset, file)
}

pub fn save_csv_writer(dataset: &Dataset, writer: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = dataset.column_names().to_vec();
    if dataset.labels().is_some() {
        header.push(LABEL_COLUMN.to_string());
    }
    wtr.write_record(&header).map_err(io_from_csv)?;
    for i in 0..dataset.n_rows() {
        let mut record: Vec<String> =
            dataset.row(i).iter().map(|v| format!("{v}")).collect();
        if let Some(labels) = dataset.labels() {
            record.push(format!("{}", labels[i]));
        }
        wtr.write_record(&record).map_err(io_from_csv)?;
    }
    wtr.flush()?;
    Ok(())
}

fn io_from_csv(e: csv::Error) -> KrdaError {
    KrdaError::Io(std::io::Error::other(e))
}

/// Uniform sample of `floor(fraction * n)` rows without replacement,
/// preserving the original row order. Deterministic given the seed.
pub fn subsample(dataset: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(KrdaError::InvalidConfig(format!(
            "subsample fraction must be in (0, 1], got {fraction}"
        )));
    }
    let n = dataset.n_rows();
    let keep = (fraction * n as f64).floor() as usize;
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Partial Fisher-Yates: the first `keep` slots become the sample.
    for i in 0..keep.min(n.saturating_sub(1)) {
        let j = rng.gen_range(i..n);
        indices.swap(i, j);
    }
    let mut chosen = indices[..keep].to_vec();
    chosen.sort_unstable();
    Ok(dataset.select_rows(&chosen))
}

/// Per-column affine map fitted as a z-score; stds are floored at 1e-12
/// so constant columns map to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub const STD_FLOOR: f64 = 1e-12;

    /// Fit per-column mean and (population) standard deviation over the
    /// given datasets pooled together.
    pub fn fit(pooled: &[&Dataset]) -> Result<Self> {
        let n_cols = pooled
            .iter()
            .map(|d| d.n_cols())
            .find(|&c| c > 0)
            .unwrap_or(0);
        let total: usize = pooled.iter().map(|d| d.n_rows()).sum();
        if total == 0 || n_cols == 0 {
            return Err(KrdaError::EmptyDataset("standardizer fit"));
        }
        for d in pooled {
            if d.n_rows() > 0 && d.n_cols() != n_cols {
                return Err(KrdaError::DimensionMismatch {
                    context: "standardizer fit",
                    expected: n_cols,
                    got: d.n_cols(),
                });
            }
        }
        let mut means = vec![0.0; n_cols];
        for d in pooled {
            for row in d.rows() {
                for (m, v) in means.iter_mut().zip(row) {
                    *m += v;
                }
            }
        }
        for m in &mut means {
            *m /= total as f64;
        }
        let mut vars = vec![0.0; n_cols];
        for d in pooled {
            for row in d.rows() {
                for ((va, v), m) in vars.iter_mut().zip(row).zip(&means) {
                    *va += (v - m) * (v - m);
                }
            }
        }
        let stds = vars
            .iter()
            .map(|v| (v / total as f64).sqrt().max(Self::STD_FLOOR))
            .collect();
        Ok(Self { means, stds })
    }

    /// Identity map of the given width (means 0, stds 1).
    pub fn identity(n_cols: usize) -> Self {
        Self {
            means: vec![0.0; n_cols],
            stds: vec![1.0; n_cols],
        }
    }

    pub fn n_cols(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for ((o, v), (m, s)) in out
            .iter_mut()
            .zip(x)
            .zip(self.means.iter().zip(&self.stds))
        {
            *o = (v - m) / s;
        }
    }

    pub fn invert(&self, z: &[f64], out: &mut [f64]) {
        for ((o, v), (m, s)) in out
            .iter_mut()
            .zip(z)
            .zip(self.means.iter().zip(&self.stds))
        {
            *o = v * s + m;
        }
    }

    pub fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply(x, &mut out);
        out
    }

    pub fn invert_vec(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; z.len()];
        self.invert(z, &mut out);
        out
    }

    /// Standardize every row of a dataset into a flat row-major buffer.
    pub fn apply_dataset(&self, data: &Dataset) -> Vec<f64> {
        let d = data.n_cols();
        let mut out = vec![0.0; data.n_rows() * d];
        for (i, row) in data.rows().enumerate() {
            self.apply(row, &mut out[i * d..(i + 1) * d]);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, noise: f64, rot: f64, seed: u64) -> MoonsSpec {
        MoonsSpec {
            n,
            noise_std: noise,
            rotation_deg: rot,
            seed,
        }
    }

    #[test]
    fn moons_noiseless_points_lie_on_arcs() {
        let d = gen_moons(&spec(4, 0.0, 0.0, 1));
        let labels = d.labels().unwrap();
        for i in 0..4 {
            let (x, y) = (d.row(i)[0], d.row(i)[1]);
            let (cx, cy) = if labels[i] == 0 { (0.0, 0.0) } else { (1.0, 0.5) };
            let r = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
            assert!((r - 1.0).abs() < 1e-12, "point {i} radius {r}");
            if labels[i] == 0 {
                assert!(y >= -1e-12);
            } else {
                assert!(y <= 0.5 + 1e-12);
            }
        }
    }

    #[test]
    fn moons_full_turn_matches_no_rotation() {
        let a = gen_moons(&spec(100, 0.1, 0.0, 9));
        let b = gen_moons(&spec(100, 0.1, 360.0, 9));
        for (ra, rb) in a.rows().zip(b.rows()) {
            assert!((ra[0] - rb[0]).abs() < 1e-9);
            assert!((ra[1] - rb[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn moons_class_balance_exact() {
        for n in [4usize, 7, 100, 301] {
            let d = gen_moons(&spec(n, 0.05, 20.0, 3));
            let ones = d.labels().unwrap().iter().filter(|&&l| l == 1).count();
            let zeros = n - ones;
            assert_eq!(ones, n / 2);
            assert_eq!(zeros, n - n / 2);
        }
    }

    #[test]
    fn moons_rotation_equivariance() {
        let theta = 40.0f64;
        let base = gen_moons(&spec(200, 0.1, 0.0, 5));
        let rotated = gen_moons(&spec(200, 0.1, theta, 5));
        let (cx, cy) = MOONS_ROTATION_CENTER;
        let (sin, cos) = (theta.to_radians().sin(), theta.to_radians().cos());
        for (rb, rr) in base.rows().zip(rotated.rows()) {
            let (dx, dy) = (rb[0] - cx, rb[1] - cy);
            let ex = cx + cos * dx - sin * dy;
            let ey = cy + sin * dx + cos * dy;
            assert!((rr[0] - ex).abs() < 1e-9);
            assert!((rr[1] - ey).abs() < 1e-9);
        }
    }

    #[test]
    fn moons_mean_radial_deviation_bounded() {
        let noise = 0.1;
        let n = 1000;
        let d = gen_moons(&spec(n, noise, 40.0, 7));
        let labels = d.labels().unwrap();
        // Rotation preserves distances to the rotated arc centers.
        let (cx, cy) = MOONS_ROTATION_CENTER;
        let th = 40.0f64.to_radians();
        let rot = |x: f64, y: f64| {
            (
                cx + th.cos() * (x - cx) - th.sin() * (y - cy),
                cy + th.sin() * (x - cx) + th.cos() * (y - cy),
            )
        };
        let c0 = rot(0.0, 0.0);
        let c1 = rot(1.0, 0.5);
        for (center, label) in [(c0, 0u8), (c1, 1u8)] {
            let mut dev = 0.0;
            let mut count = 0;
            for i in 0..n {
                if labels[i] == label {
                    let r = ((d.row(i)[0] - center.0).powi(2)
                        + (d.row(i)[1] - center.1).powi(2))
                    .sqrt();
                    dev += r - 1.0;
                    count += 1;
                }
            }
            let mean_dev = dev / count as f64;
            assert!(
                mean_dev.abs() <= 3.0 * noise / (count as f64).sqrt(),
                "label {label}: mean radial deviation {mean_dev}"
            );
        }
    }

    #[test]
    fn moons_pure_function_of_spec() {
        let a = gen_moons(&spec(50, 0.2, 15.0, 77));
        let b = gen_moons(&spec(50, 0.2, 15.0, 77));
        assert_eq!(a, b);
    }

    fn two_mode_spec(n: usize, seed: u64) -> GmmSpec {
        GmmSpec {
            modes: vec![
                GmmMode {
                    weight: 0.5,
                    mean: vec![-5.0, 0.0],
                    cov_diag: vec![1.0, 1.0],
                },
                GmmMode {
                    weight: 0.5,
                    mean: vec![5.0, 0.0],
                    cov_diag: vec![1.0, 1.0],
                },
            ],
            n,
            seed,
        }
    }

    #[test]
    fn gmm_single_mode_mean_bound() {
        let spec = GmmSpec {
            modes: vec![GmmMode {
                weight: 1.0,
                mean: vec![0.0, 0.0],
                cov_diag: vec![1.0, 1.0],
            }],
            n: 100_000,
            seed: 13,
        };
        let d = gen_gmm(&spec).unwrap();
        for j in 0..2 {
            let mean: f64 = d.rows().map(|r| r[j]).sum::<f64>() / d.n_rows() as f64;
            assert!(mean.abs() <= 0.02, "coordinate {j} mean {mean}");
        }
        assert!(d.labels().is_none());
    }

    #[test]
    fn gmm_zero_weight_mode_never_sampled() {
        let spec = GmmSpec {
            modes: vec![
                GmmMode {
                    weight: 1.0,
                    mean: vec![0.0],
                    cov_diag: vec![1.0],
                },
                GmmMode {
                    weight: 0.0,
                    mean: vec![1e6],
                    cov_diag: vec![1.0],
                },
            ],
            n: 5000,
            seed: 2,
        };
        let d = gen_gmm(&spec).unwrap();
        assert!(d.rows().all(|r| r[0].abs() < 100.0));
    }

    #[test]
    fn gmm_equal_modes_balanced_counts() {
        let n = 10_000;
        let d = gen_gmm(&two_mode_spec(n, 21)).unwrap();
        let left = d.rows().filter(|r| r[0] < 0.0).count() as f64;
        assert!(
            (left - n as f64 / 2.0).abs() <= 1.5 * (n as f64).sqrt(),
            "left count {left}"
        );
    }

    #[test]
    fn csv_header_only_gives_empty_dataset() {
        let d = load_csv_reader("x1,x2,label\n".as_bytes()).unwrap();
        assert_eq!(d.n_rows(), 0);
        assert_eq!(d.n_cols(), 2);
        assert!(d.labels().is_some());
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let mut rng = <ChaCha8Rng as SeedableRng>::seed_from_u64(99);
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|_| {
                (0..5)
                    .map(|_| (rng.gen::<f64>() - 0.5) * 1e3 * rng.gen::<f64>().exp())
                    .collect()
            })
            .collect();
        let labels: Vec<u8> = (0..100).map(|i| (i % 2) as u8).collect();
        let d = Dataset::from_rows(rows, Some(labels)).unwrap();
        let mut buf = Vec::new();
        save_csv_writer(&d, &mut buf).unwrap();
        let back = load_csv_reader(buf.as_slice()).unwrap();
        assert_eq!(d.features(), back.features());
        assert_eq!(d.labels(), back.labels());
    }

    #[test]
    fn csv_nan_cell_is_rejected_with_location() {
        let err = load_csv_reader("a,b\n1.0,NaN\n".as_bytes()).unwrap_err();
        match err {
            KrdaError::NonFiniteValue { row, column } => {
                assert_eq!(row, 1);
                assert_eq!(column, "b");
            }
            other => panic!("expected NonFiniteValue, got {other:?}"),
        }
    }

    #[test]
    fn csv_garbage_cell_is_a_parse_error() {
        let err = load_csv_reader("a,b\n1.0,zebra\n".as_bytes()).unwrap_err();
        match err {
            KrdaError::ParseError { row, column, .. } => {
                assert_eq!(row, 1);
                assert_eq!(column, "b");
            }
            other => panic!("expected ParseError, got {other:?}"),
        }
    }

    #[test]
    fn csv_bad_label_is_a_parse_error() {
        let err = load_csv_reader("a,label\n1.0,2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, KrdaError::ParseError { .. }));
    }

    #[test]
    fn subsample_full_fraction_is_identity() {
        let d = gen_moons(&spec(40, 0.1, 0.0, 4));
        let s = subsample(&d, 1.0, 123).unwrap();
        assert_eq!(d, s);
    }

    #[test]
    fn subsample_fraction_count_exact() {
        let d = gen_moons(&spec(1000, 0.1, 0.0, 4));
        let s = subsample(&d, 0.9, 5).unwrap();
        assert_eq!(s.n_rows(), 900);
    }

    #[test]
    fn subsample_different_seeds_differ() {
        let d = gen_moons(&spec(200, 0.1, 0.0, 4));
        let a = subsample(&d, 0.5, 1).unwrap();
        let b = subsample(&d, 0.5, 2).unwrap();
        assert_ne!(a.features(), b.features());
    }

    #[test]
    fn standardizer_constant_column_maps_to_zero() {
        let d = Dataset::from_rows(vec![vec![3.0, 1.0], vec![3.0, 2.0], vec![3.0, 3.0]], None)
            .unwrap();
        let s = Standardizer::fit(&[&d]).unwrap();
        assert_eq!(s.stds[0], Standardizer::STD_FLOOR);
        let z = s.apply_vec(&[3.0, 2.0]);
        assert_eq!(z[0], 0.0);
    }

    #[test]
    fn standardizer_output_has_unit_moments() {
        let d = gen_moons(&spec(500, 0.3, 0.0, 8));
        let s = Standardizer::fit(&[&d]).unwrap();
        let z = s.apply_dataset(&d);
        for j in 0..2 {
            let col: Vec<f64> = z.iter().skip(j).step_by(2).copied().collect();
            let mean: f64 = col.iter().sum::<f64>() / col.len() as f64;
            let var: f64 =
                col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-12);
            assert!((var.sqrt() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn standardizer_invert_after_apply_round_trips() {
        let mut rng = <ChaCha8Rng as SeedableRng>::seed_from_u64(17);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..3).map(|_| (rng.gen::<f64>() - 0.5) * 200.0).collect())
            .collect();
        let d = Dataset::from_rows(rows, None).unwrap();
        let s = Standardizer::fit(&[&d]).unwrap();
        for row in d.rows() {
            let back = s.invert_vec(&s.apply_vec(row));
            for (a, b) in row.iter().zip(&back) {
                assert!((a - b).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn standardizer_empty_input_is_an_error() {
        let d = Dataset::from_rows(vec![], None).unwrap();
        assert!(matches!(
            Standardizer::fit(&[&d]),
            Err(KrdaError::EmptyDataset(_))
        ));
    }
}
