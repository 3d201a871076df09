//! Tridiagonal GOE model and Sturm-sequence eigenvalue bisection.
//!
//! The GOE spectrum of size `n` (our normalization) has the same law as the
//! spectrum of the symmetric tridiagonal matrix with diagonal `N(0, 2)/√n`
//! and off-diagonal `χ_{n−k}/√n`, `k = 1..n−1`. Individual eigenvalues of a
//! tridiagonal matrix are located by bisection on the Sturm count in `O(n)`
//! per probe, so gap statistics at a handful of indices never need a full
//! dense eigendecomposition.

use rand_distr::{ChiSquared, Distribution};

use crate::error::{Error, Result};
use crate::rng::Seed;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct SymTridiagonal<T: Real> {
    pub diag: Vec<T>,
    pub offdiag: Vec<T>,
}

impl<T: Real> SymTridiagonal<T> {
    pub fn new(diag: Vec<T>, offdiag: Vec<T>) -> Result<Self> {
        if diag.is_empty() || offdiag.len() + 1 != diag.len() {
            return Err(Error::InvalidDims(format!(
                "tridiagonal needs n ≥ 1 diagonal and n − 1 off-diagonal entries (got {} and {})",
                diag.len(),
                offdiag.len()
            )));
        }
        Ok(Self { diag, offdiag })
    }

    /// GOE spectrum sampler in tridiagonal form.
    pub fn sample_goe(n: usize, seed: Seed) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDims("GOE dimension must be at least 1".into()));
        }
        let mut rng = seed.rng();
        let scale = 1.0 / (n as f64).sqrt();
        let diag = (0..n).map(|_| T::lit(f64::standard_normal(&mut rng) * 2f64.sqrt() * scale)).collect();
        let offdiag = (1..n)
            .map(|k| {
                let chi2 = ChiSquared::new((n - k) as f64).expect("positive degrees of freedom");
                T::lit(chi2.sample(&mut rng).sqrt() * scale)
            })
            .collect();
        Ok(Self { diag, offdiag })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Number of eigenvalues strictly below `x`.
    pub fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut q = self.diag[0].as_f64() - x;
        if q < 0.0 {
            count += 1;
        }
        for k in 1..self.diag.len() {
            let b = self.offdiag[k - 1].as_f64();
            let prev = if q == 0.0 { f64::EPSILON * (b.abs() + 1.0) } else { q };
            q = self.diag[k].as_f64() - x - b * b / prev;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.diag.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in 0..n {
            let r = if k > 0 { self.offdiag[k - 1].as_f64().abs() } else { 0.0 }
                + if k + 1 < n { self.offdiag[k].as_f64().abs() } else { 0.0 };
            lo = lo.min(self.diag[k].as_f64() - r);
            hi = hi.max(self.diag[k].as_f64() + r);
        }
        (lo - 1e-12, hi + 1e-12)
    }

    /// The `k`-th smallest eigenvalue (0-based).
    pub fn eigenvalue(&self, k: usize) -> f64 {
        assert!(k < self.len());
        let (mut lo, mut hi) = self.gershgorin();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn eigenvalues_range(&self, range: std::ops::Range<usize>) -> Vec<f64> {
        range.map(|k| self.eigenvalue(k)).collect()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigenvalues_range(0..self.len())
    }

    /// Indices `k` whose eigenvalue lies in `[lo, hi)`.
    pub fn indices_in(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        self.count_below(lo)..self.count_below(hi)
    }
}
