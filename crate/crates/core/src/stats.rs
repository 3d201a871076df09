//! Small statistical helpers shared by the experiments: Kolmogorov–Smirnov
//! distances, histogram L¹ distances, and Monte Carlo means.

use serde::{Deserialize, Serialize};

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty());
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// One-sample Kolmogorov–Smirnov statistic against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    assert!(!sample.is_empty());
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter().enumerate().fold(0.0f64, |d, (k, &x)| {
        let f = cdf(x);
        d.max((f - k as f64 / n).abs()).max(((k + 1) as f64 / n - f).abs())
    })
}

/// L¹ distance between the normalized histogram of `sample` on `bins`
/// equal bins over `[lo, hi]` and a reference density. Sample mass outside
/// the range counts fully toward the distance.
pub fn histogram_l1<F: Fn(f64) -> f64>(sample: &[f64], lo: f64, hi: f64, bins: usize, density: F) -> f64 {
    assert!(hi > lo && bins > 0 && !sample.is_empty());
    let w = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    let mut outside = 0usize;
    for &x in sample {
        if x < lo || x >= hi {
            outside += 1;
            continue;
        }
        let k = (((x - lo) / w) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let n = sample.len() as f64;
    let mut dist = outside as f64 / n;
    for (k, &c) in counts.iter().enumerate() {
        let a = lo + k as f64 * w;
        let mass = crate::quadrature::integrate(&density, a, a + w, 1, 8);
        dist += (c as f64 / n - mass).abs();
    }
    dist
}

/// L¹ distance between the normalized histograms of two samples on `bins`
/// equal bins over `[lo, hi]`; out-of-range mass is binned on its own.
pub fn histogram_l1_two_sample(a: &[f64], b: &[f64], lo: f64, hi: f64, bins: usize) -> f64 {
    assert!(hi > lo && bins > 0 && !a.is_empty() && !b.is_empty());
    let hist = |xs: &[f64]| {
        let mut c = vec![0.0; bins + 2];
        for &x in xs {
            let k = if x < lo {
                bins
            } else if x >= hi {
                bins + 1
            } else {
                (((x - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1)
            };
            c[k] += 1.0 / xs.len() as f64;
        }
        c
    };
    hist(a).iter().zip(hist(b)).map(|(p, q)| (p - q).abs()).sum()
}

/// Mean with its Monte Carlo standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        assert!(n > 0);
        let mean = xs.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr, samples: n }
    }

    /// Difference of two independent estimates with the combined error.
    pub fn minus(&self, other: &Estimate) -> Estimate {
        Estimate {
            mean: self.mean - other.mean,
            stderr: (self.stderr * self.stderr + other.stderr * other.stderr).sqrt(),
            samples: self.samples.min(other.samples),
        }
    }
}

/// Median of a sample (upper median for even lengths).
pub fn median(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty());
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Fraction of entries satisfying `pred`.
pub fn fraction<F: Fn(f64) -> bool>(xs: &[f64], pred: F) -> f64 {
    xs.iter().filter(|&&x| pred(x)).count() as f64 / xs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_identical_samples_is_zero() {
        let a = [0.3, 0.1, 0.7, 0.2];
        assert_eq!(ks_two_sample(&a, &a), 0.0);
    }

    #[test]
    fn ks_disjoint_samples_is_one() {
        assert_eq!(ks_two_sample(&[0.0, 0.1], &[1.0, 2.0, 3.0]), 1.0);
    }

    #[test]
    fn ks_one_sample_uniform_grid() {
        let s: Vec<f64> = (0..100).map(|k| (k as f64 + 0.5) / 100.0).collect();
        assert!((ks_one_sample(&s, |x| x.clamp(0.0, 1.0)) - 0.005).abs() < 1e-12);
    }

    #[test]
    fn histogram_of_uniform_grid_is_close() {
        let s: Vec<f64> = (0..10_000).map(|k| (k as f64 + 0.5) / 10_000.0).collect();
        let d = histogram_l1(&s, 0.0, 1.0, 20, |_| 1.0);
        assert!(d < 1e-9, "{d}");
    }

    #[test]
    fn estimate_of_constant_has_zero_error() {
        let e = Estimate::from_samples(&[2.0; 10]);
        assert_eq!(e.mean, 2.0);
        assert_eq!(e.stderr, 0.0);
    }
}
