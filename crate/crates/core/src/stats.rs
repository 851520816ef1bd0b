//! Monte Carlo estimators.

use serde::Serialize;

/// Batches used for standard errors unless a caller asks otherwise.
pub const DEFAULT_BATCHES: usize = 50;

/// A sample mean with its batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl Estimate {
    /// `|mean − target| / se`, infinite when `se = 0` and the means differ.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.mean - target).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.se
        }
    }
}

/// Mean and batch-means standard error of `samples`, taken in order.
///
/// Samples are split into `batches` contiguous groups (the last absorbs the
/// remainder) and the standard error is the spread of the group means.
/// With fewer than `2·batches` samples each sample is its own batch.
pub fn batch_means(samples: &[f64], batches: usize) -> Estimate {
    let n = samples.len();
    if n == 0 {
        return Estimate {
            mean: f64::NAN,
            se: f64::NAN,
            n,
        };
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Estimate { mean, se: 0.0, n };
    }
    let b = if n < 2 * batches.max(2) { n } else { batches.max(2) };
    let size = n / b;
    let mut ss = 0.0;
    for k in 0..b {
        let lo = k * size;
        let hi = if k + 1 == b { n } else { lo + size };
        let chunk = &samples[lo..hi];
        let m = chunk.iter().sum::<f64>() / chunk.len() as f64;
        ss += (m - mean) * (m - mean);
    }
    let se = (ss / (b as f64 * (b as f64 - 1.0))).sqrt();
    Estimate { mean, se, n }
}

/// Kolmogorov–Smirnov distance between the empirical law of `samples` and
/// `cdf`, evaluated at the observed values with the right-continuous
/// empirical distribution function.
///
/// This is the supremum over the support of the sample, which is the
/// appropriate distance when the statistic lives on a lattice (for example
/// a sojourn time measured in whole grid steps).
pub fn ks_distance_on_support(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let mut j = i;
        while j + 1 < xs.len() && xs[j + 1] == xs[i] {
            j += 1;
        }
        let ecdf = (j + 1) as f64 / n;
        d = d.max((ecdf - cdf(xs[i])).abs());
        i = j + 1;
    }
    d
}

/// Classical two-sided Kolmogorov–Smirnov distance for a continuous law.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic one-sample KS critical value at level `alpha`.
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    (-(0.5 * alpha).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// Rank-based bucket label (`0..buckets`) for each value; ties are broken
/// by position so every bucket has `n/buckets` members up to one.
pub fn quantile_buckets(values: &[f64], buckets: usize) -> Vec<usize> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut label = vec![0; n];
    for (rank, idx) in order.into_iter().enumerate() {
        label[idx] = rank * buckets / n;
    }
    label
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_samples_have_zero_error() {
        let e = batch_means(&[0.25; 1000], 50);
        assert_eq!(e.mean, 0.25);
        assert_eq!(e.se, 0.0);
        assert_eq!(e.z_score(0.25), 0.0);
        assert!(e.z_score(0.3).is_infinite());
    }

    #[test]
    fn batch_error_scales_like_iid_error() {
        // Deterministic low-discrepancy-free pseudo data: alternating ±1.
        let xs: Vec<f64> = (0..10_000)
            .map(|i| if (i * 7919) % 13 < 6 { 1.0 } else { -1.0 })
            .collect();
        let e = batch_means(&xs, 50);
        assert!(e.se.is_finite());
        let small = batch_means(&xs[..10], 50);
        assert_eq!(small.n, 10);
        assert!(small.se > 0.0);
    }

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let n = 1000;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_distance(&xs, |x| x);
        assert!((d - 0.5 / n as f64).abs() < 1e-12);
        assert!(ks_distance_on_support(&xs, |x| x) <= d + 1e-15);
        assert!((ks_critical_value(10_000, 0.01) - 0.016276).abs() < 1e-5);
    }

    #[test]
    fn buckets_are_balanced() {
        let v: Vec<f64> = (0..100).map(|i| ((i * 37) % 100) as f64).collect();
        let b = quantile_buckets(&v, 10);
        for k in 0..10 {
            assert_eq!(b.iter().filter(|&&x| x == k).count(), 10);
        }
        let ties = quantile_buckets(&[1.0; 20], 4);
        assert_eq!(ties.iter().filter(|&&x| x == 3).count(), 5);
    }
}
