//! Small statistics helpers shared by the benchmark harness and tests:
//! Kolmogorov-Smirnov statistics, energy distance, and t-based
//! confidence intervals.

/// Two-sample Kolmogorov-Smirnov statistic: the largest gap between the
/// two empirical CDFs.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty());
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (mut i, mut j) = (0usize, 0usize);
    let mut ks: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        // Step past every copy of the next distinct value on both sides
        // before measuring, so ties do not inflate the gap.
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] == v {
            i += 1;
        }
        while j < ys.len() && ys[j] == v {
            j += 1;
        }
        let fa = i as f64 / xs.len() as f64;
        let fb = j as f64 / ys.len() as f64;
        ks = ks.max((fa - fb).abs());
    }
    ks
}

/// One-sample KS statistic against the uniform distribution on [0, 1].
pub fn ks_uniform(samples: &[f64]) -> f64 {
    assert!(!samples.is_empty());
    let mut us = samples.to_vec();
    us.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let n = us.len() as f64;
    let mut ks: f64 = 0.0;
    for (i, &u) in us.iter().enumerate() {
        ks = ks
            .max((u - i as f64 / n).abs())
            .max((u - (i + 1) as f64 / n).abs());
    }
    ks
}

fn pairwise_mean_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for x in a {
        for y in b {
            let sq: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
            total += sq.sqrt();
        }
    }
    total / (a.len() * b.len()) as f64
}

/// Energy distance between two point clouds:
/// `2 E|X-Y| - E|X-X'| - E|Y-Y'|` (nonnegative, 0 iff same distribution).
pub fn energy_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty());
    2.0 * pairwise_mean_distance(a, b)
        - pairwise_mean_distance(a, a)
        - pairwise_mean_distance(b, b)
}

/// Two-sided 97.5% Student-t quantiles for small degrees of freedom;
/// beyond the table the normal value applies.
const T_975: [f64; 30] = [
    12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160,
    2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056,
    2.052, 2.048, 2.045, 2.042,
];

/// Mean and 95% confidence-interval half-width (Student-t). A single
/// observation reports a half-width of 0.
pub fn mean_ci95(values: &[f64]) -> (f64, f64) {
    assert!(!values.is_empty());
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let df = values.len() - 1;
    let t = if df <= T_975.len() {
        T_975[df - 1]
    } else {
        1.96
    };
    (mean, t * (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_two_sample_identical_is_zero() {
        let a = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(ks_two_sample(&a, &a), 0.0);
    }

    #[test]
    fn ks_two_sample_disjoint_is_one() {
        let a = vec![0.0, 1.0, 2.0];
        let b = vec![10.0, 11.0, 12.0];
        assert_eq!(ks_two_sample(&a, &b), 1.0);
    }

    #[test]
    fn ks_uniform_of_perfect_grid_is_small() {
        let n = 1000;
        let us: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        assert!(ks_uniform(&us) <= 0.5 / n as f64 + 1e-12);
    }

    #[test]
    fn ks_uniform_of_constant_is_large() {
        let us = vec![0.5; 100];
        assert!(ks_uniform(&us) >= 0.5);
    }

    #[test]
    fn energy_distance_separates_shifted_clouds() {
        let a: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 * 0.01, 0.0]).collect();
        let b: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 * 0.01 + 5.0, 0.0]).collect();
        let near = energy_distance(&a, &a.clone());
        let far = energy_distance(&a, &b);
        assert!(near.abs() < 1e-12);
        assert!(far > 1.0);
    }

    #[test]
    fn mean_ci95_matches_t_table() {
        let (mean, hw) = mean_ci95(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!((mean - 3.0).abs() < 1e-12);
        // s = sqrt(2.5), hw = 2.776 * sqrt(2.5/5)
        assert!((hw - 2.776 * (2.5f64 / 5.0).sqrt()).abs() < 1e-9);
        assert_eq!(mean_ci95(&[7.5]).1, 0.0);
    }
}
