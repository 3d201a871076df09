//! Numeric CDF on a uniform grid and quantile inversion.

use rayon::prelude::*;

use super::SpectralDensity;
use crate::error::{Error, Result};

pub const CDF_GRID_POINTS: usize = 4096;

/// Trapezoid CDF of a density sampled on a uniform grid spanning its support
/// padded by 10% on each side.
#[derive(Clone, Debug)]
pub struct NumericCdf {
    grid: Vec<f64>,
    dens: Vec<f64>,
    cum: Vec<f64>,
}

impl NumericCdf {
    pub fn build<D: SpectralDensity + ?Sized>(d: &D) -> Result<Self> {
        Self::build_with_points(d, CDF_GRID_POINTS)
    }

    pub fn build_with_points<D: SpectralDensity + ?Sized>(d: &D, points: usize) -> Result<Self> {
        let (a, b) = d.support();
        if !(b > a) || points < 2 {
            return Err(Error::InvalidArgument(format!("degenerate support [{a}, {b}]")));
        }
        let pad = 0.1 * (b - a);
        let (lo, hi) = (a - pad, b + pad);
        let h = (hi - lo) / (points - 1) as f64;
        let grid: Vec<f64> = (0..points).map(|k| lo + k as f64 * h).collect();
        let dens: Vec<f64> = grid.par_iter().map(|&e| d.density(e)).collect();
        if let Some(k) = dens.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonConvergence { iterations: 0, residual: grid[k] });
        }
        let dens: Vec<f64> = dens.into_iter().map(|x| x.max(0.0)).collect();
        let mut cum = Vec::with_capacity(points);
        cum.push(0.0);
        for k in 1..points {
            cum.push(cum[k - 1] + 0.5 * h * (dens[k - 1] + dens[k]));
        }
        Ok(Self { grid, dens, cum })
    }

    pub fn mass(&self) -> f64 {
        *self.cum.last().expect("non-empty grid")
    }

    pub fn check_mass(&self, tolerance: f64) -> Result<()> {
        let mass = self.mass();
        if (mass - 1.0).abs() > tolerance {
            return Err(Error::NotNormalized { mass, tolerance });
        }
        Ok(())
    }

    /// Normalized CDF (piecewise quadratic between grid points).
    pub fn cdf(&self, x: f64) -> f64 {
        let n = self.grid.len();
        if x <= self.grid[0] {
            return 0.0;
        }
        if x >= self.grid[n - 1] {
            return 1.0;
        }
        let h = self.grid[1] - self.grid[0];
        let k = (((x - self.grid[0]) / h) as usize).min(n - 2);
        self.cell_cdf(k, x - self.grid[k]) / self.mass()
    }

    fn cell_cdf(&self, k: usize, s: f64) -> f64 {
        let h = self.grid[1] - self.grid[0];
        let (d0, d1) = (self.dens[k], self.dens[k + 1]);
        self.cum[k] + d0 * s + (d1 - d0) * s * s / (2.0 * h)
    }

    /// Smallest `x` with `cdf(x) = q`, by bisection inside the bracketing cell.
    pub fn quantile(&self, q: f64) -> f64 {
        let target = q.clamp(0.0, 1.0) * self.mass();
        let n = self.grid.len();
        let k = self.cum.partition_point(|&c| c < target).clamp(1, n - 1) - 1;
        let h = self.grid[1] - self.grid[0];
        let (mut lo, mut hi) = (0.0, h);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.cell_cdf(k, mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        self.grid[k] + 0.5 * (lo + hi)
    }

    /// `γ_i` with `cdf(γ_i) = i/n`, `i = 1..=n`.
    pub fn classical_locations(&self, n: usize) -> Vec<f64> {
        (1..=n).map(|i| self.quantile(i as f64 / n as f64)).collect()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn densities(&self) -> &[f64] {
        &self.dens
    }
}

pub fn classical_locations<D: SpectralDensity + ?Sized>(d: &D, n: usize) -> Result<Vec<f64>> {
    classical_locations_with_tolerance(d, n, super::DEFAULT_MASS_TOLERANCE)
}

pub fn classical_locations_with_tolerance<D: SpectralDensity + ?Sized>(
    d: &D,
    n: usize,
    tolerance: f64,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one location".into()));
    }
    let cdf = NumericCdf::build(d)?;
    cdf.check_mass(tolerance)?;
    Ok(cdf.classical_locations(n))
}
