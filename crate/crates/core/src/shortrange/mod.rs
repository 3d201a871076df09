//! Short-range cutoff of the linearized eigenvalue dynamics.
//!
//! The `2N` nontrivial eigenvalues are handled as one ordered particle
//! system indexed by sorted position `p ∈ [0, 2N)`; position `p` and its
//! mirror `2N − 1 − p` carry `±λ`. Positions below `N` are the negative
//! side, so "`ij > 0`" in the cutoff set means "same side".

mod coupled;
#[cfg(test)]
mod tests;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::dbm::DriftMode;
use crate::ensembles::InitialData;
use crate::error::{Error, Result};
use crate::freeconv::{gamma_e_derivative, principal_value, FcDensity, NumericCdf};
use crate::scalar::Real;

pub use coupled::{
    integrate_coupled, level_repulsion_stat, shortrange_error, wigner_coupling_distance, write_coupled_ndjson, CoupledConfig,
    CoupledRecord, CoupledSystem, GoeBranch, LevelRepulsion, ShortRangeErrorReport, SupRecord, WignerCouplingReport,
};

/// Exponents and time scales of the cutoff construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShortRangeParams {
    pub n: usize,
    pub omega0: f64,
    pub omega1: f64,
    pub omega_a: f64,
    pub omega_l: f64,
    /// `N^{−1+ω₀}`.
    pub t0: f64,
    /// `N^{−1+ω₁}`.
    pub t1: f64,
    /// Time unit of the admissible-time windows, `1/N`.
    pub ell: f64,
    /// Regularity scale `G` of the initial data.
    pub big_g: f64,
    /// Failed ordering inequalities; empty for a valid schedule.
    pub violations: Vec<String>,
}

fn schedule_violations(omega0: f64, omega1: f64, omega_a: f64, omega_l: f64) -> Vec<String> {
    let mut v = Vec::new();
    if !(0.0 < omega1) {
        v.push(format!("0 < ω₁ fails (ω₁ = {omega1})"));
    }
    if !(omega1 < omega_l) {
        v.push(format!("ω₁ < ω_ℓ fails ({omega1} ≥ {omega_l})"));
    }
    if !(omega_l < omega_a) {
        v.push(format!("ω_ℓ < ω_A fails ({omega_l} ≥ {omega_a})"));
    }
    if !(omega_a < omega0 / 2.0) {
        v.push(format!("ω_A < ω₀/2 fails ({omega_a} ≥ {})", omega0 / 2.0));
    }
    v
}

/// Validate `0 < ω₁ < ω_ℓ < ω_A < ω₀/2` and compute `t₀`, `t₁`.
pub fn make_schedule(n: usize, omega0: f64, omega1: f64, omega_a: f64, omega_l: f64) -> Result<ShortRangeParams> {
    let p = make_schedule_unchecked(n, omega0, omega1, omega_a, omega_l)?;
    if !p.violations.is_empty() {
        return Err(Error::Schedule(p.violations.join("; ")));
    }
    Ok(p)
}

/// Like [`make_schedule`] but records ordering violations instead of
/// rejecting, for control runs.
pub fn make_schedule_unchecked(n: usize, omega0: f64, omega1: f64, omega_a: f64, omega_l: f64) -> Result<ShortRangeParams> {
    if n < 2 {
        return Err(Error::InvalidDims(format!("N = {n} is too small for a schedule")));
    }
    if ![omega0, omega1, omega_a, omega_l].iter().all(|w| w.is_finite()) || !(omega0 < 1.0) {
        return Err(Error::Schedule(format!("exponents must be finite with ω₀ < 1 (ω₀ = {omega0})")));
    }
    let nf = n as f64;
    Ok(ShortRangeParams {
        n,
        omega0,
        omega1,
        omega_a,
        omega_l,
        t0: nf.powf(-1.0 + omega0),
        t1: nf.powf(-1.0 + omega1),
        ell: 1.0 / nf,
        big_g: 1.0,
        violations: schedule_violations(omega0, omega1, omega_a, omega_l),
    })
}

impl ShortRangeParams {
    pub fn with_regularity(mut self, big_g: f64) -> Self {
        self.big_g = big_g;
        self
    }

    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    /// Largest `d` with `d < N^{ω_A}`.
    pub fn window_radius(&self) -> usize {
        strict_floor((self.n as f64).powf(self.omega_a))
    }

    /// Largest `d` with `d ≤ N^{ω_ℓ}`.
    pub fn reach(&self) -> usize {
        (self.n as f64).powf(self.omega_l).floor() as usize
    }
}

fn strict_floor(x: f64) -> usize {
    let f = x.floor();
    if f == x {
        (f as usize).saturating_sub(1)
    } else {
        f as usize
    }
}

/// Index sets of the cutoff around the energy `E`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexSets {
    /// Number of nontrivial particles `2N`.
    pub size: usize,
    /// `k(E)`.
    pub center: usize,
    /// `ℐ_{E,ω_A}` as a position range.
    pub window: Range<usize>,
    /// `𝒞_q` as a position range.
    pub regular: Range<usize>,
    /// Pairs with `|i − j| ≤ reach` are short-range.
    pub reach: usize,
    /// Every non-mirror pair is short-range.
    pub all_pairs: bool,
}

impl IndexSets {
    /// Build from the `2N` classical locations at `t₀`.
    pub fn build(e: f64, params: &ShortRangeParams, locations: &[f64], q: f64) -> Result<Self> {
        if locations.len() != 2 * params.n {
            return Err(Error::Mismatch(format!("{} classical locations for N = {}", locations.len(), params.n)));
        }
        if !(q > 0.0) {
            return Err(Error::InvalidArgument(format!("q = {q} must be positive")));
        }
        let center = nearest_location(e, locations)?;
        let size = locations.len();
        let r = params.window_radius();
        let window = center.saturating_sub(r)..(center + r + 1).min(size);
        let half = q * params.big_g;
        let lo = locations.partition_point(|&g| g < e - half);
        let hi = locations.partition_point(|&g| g <= e + half);
        Ok(Self { size, center, window, regular: lo..hi.max(lo), reach: params.reach(), all_pairs: false })
    }

    /// Every non-mirror pair interacts; used for the symmetric controls.
    pub fn all_pairs(size: usize, center: usize, window: Range<usize>) -> Result<Self> {
        if size % 2 != 0 || center >= size || window.end > size {
            return Err(Error::InvalidArgument("index sets exceed the particle count".into()));
        }
        Ok(Self { size, center, window, regular: 0..0, reach: size, all_pairs: true })
    }

    pub fn mirror(&self, p: usize) -> usize {
        self.size - 1 - p
    }

    pub fn in_window(&self, p: usize) -> bool {
        self.window.contains(&p)
    }

    pub fn in_regular(&self, p: usize) -> bool {
        self.regular.contains(&p)
    }

    /// Both positions on the same side of the origin.
    pub fn same_side(&self, i: usize, j: usize) -> bool {
        let half = self.size / 2;
        (i < half) == (j < half)
    }

    /// `(i, j) ∈ 𝒜_q`. The diagonal and the mirror pair `(i, −i)` are never
    /// members: neither term appears in the drift.
    pub fn short_range(&self, i: usize, j: usize) -> bool {
        if i == j || j == self.mirror(i) {
            return false;
        }
        self.all_pairs
            || i.abs_diff(j) <= self.reach
            || (self.same_side(i, j) && !self.in_regular(i) && !self.in_regular(j))
    }
}

/// `argmin_p |E − γ_p|`, ties to the lower position.
pub fn nearest_location(e: f64, locations: &[f64]) -> Result<usize> {
    let (first, last) = match (locations.first(), locations.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::Empty("no classical locations".into())),
    };
    if !(e >= first && e <= last) {
        return Err(Error::OutsideBulk(e));
    }
    let mut best = 0;
    for (p, g) in locations.iter().enumerate() {
        if (e - g).abs() < (e - locations[best]).abs() {
            best = p;
        }
    }
    Ok(best)
}

/// `2N` classical locations of `ρ_fc,t`.
pub fn fc_locations<T: Real>(init: &InitialData<T>, t: f64, eta_floor: f64) -> Result<Vec<f64>> {
    let cdf = NumericCdf::build(&FcDensity::new(init, T::lit(t), T::lit(eta_floor)))?;
    cdf.check_mass(crate::freeconv::DEFAULT_MASS_TOLERANCE)?;
    Ok(cdf.classical_locations(2 * init.len()))
}

/// Knots of `γ_E(t)` for `t ∈ [0, t₁]` (time measured from `t₀`), the
/// compensation `−∂_tγ_E` and the density `ρ_fc(γ_E)`, interpolated
/// linearly in `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftTable {
    pub times: Vec<f64>,
    pub gamma: Vec<f64>,
    pub compensation: Vec<f64>,
    pub density: Vec<f64>,
}

pub const SHIFT_KNOTS: usize = 64;

impl ShiftTable {
    /// Integrate `∂_tγ_E = −Re m_fc,t₀+t(γ_E)` from `γ_E(0) = gamma0` with
    /// one RK4 step per knot interval.
    pub fn build<T: Real>(init: &InitialData<T>, t0: f64, t1: f64, gamma0: f64, knots: usize) -> Result<Self> {
        if knots < 2 || !(t1 > 0.0) || !(t0 > 0.0) {
            return Err(Error::InvalidArgument("shift table needs t₀, t₁ > 0 and two knots".into()));
        }
        let f = |tau: f64, g: f64| gamma_e_derivative(init, T::lit(t0 + tau), T::lit(g), DriftMode::Brownian);
        let h = t1 / (knots - 1) as f64;
        let mut times = Vec::with_capacity(knots);
        let mut gamma = Vec::with_capacity(knots);
        let mut compensation = Vec::with_capacity(knots);
        let mut density = Vec::with_capacity(knots);
        let mut g = gamma0;
        for k in 0..knots {
            let tau = k as f64 * h;
            let pv = principal_value(init, T::lit(t0 + tau), T::lit(g), DriftMode::Brownian)?;
            let k1 = f(tau, g)?;
            times.push(tau);
            gamma.push(g);
            compensation.push(-k1);
            density.push(pv.density);
            if k + 1 < knots {
                let k2 = f(tau + h / 2.0, g + h / 2.0 * k1)?;
                let k3 = f(tau + h / 2.0, g + h / 2.0 * k2)?;
                let k4 = f(tau + h, g + h * k3)?;
                g += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
        }
        Ok(Self { times, gamma, compensation, density })
    }

    /// `γ_E ≡ 0` with no compensation, the symmetric-center configuration.
    pub fn centered(t1: f64) -> Self {
        Self { times: vec![0.0, t1], gamma: vec![0.0; 2], compensation: vec![0.0; 2], density: vec![0.0; 2] }
    }

    fn interp(&self, values: &[f64], t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return values[0];
        }
        if t >= self.times[n - 1] {
            return values[n - 1];
        }
        let k = self.times.partition_point(|&x| x <= t).min(n - 1).max(1) - 1;
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        values[k] + w * (values[k + 1] - values[k])
    }

    pub fn gamma_at(&self, t: f64) -> f64 {
        self.interp(&self.gamma, t)
    }

    pub fn compensation_at(&self, t: f64) -> f64 {
        self.interp(&self.compensation, t)
    }

    pub fn density_at(&self, t: f64) -> f64 {
        self.interp(&self.density, t)
    }
}

/// Everything about a cutoff run that depends only on `V` and the schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShortRangeSetup {
    pub params: ShortRangeParams,
    pub energy: f64,
    pub q: f64,
    /// `γ_{p,t₀}` for the `2N` positions.
    pub locations: Vec<f64>,
    pub sets: IndexSets,
    pub shift: ShiftTable,
}

impl ShortRangeSetup {
    pub fn build<T: Real>(init: &InitialData<T>, params: ShortRangeParams, energy: f64, q: f64, eta_floor: f64) -> Result<Self> {
        if init.len() != params.n {
            return Err(Error::Mismatch(format!("{} singular values for N = {}", init.len(), params.n)));
        }
        let locations = fc_locations(init, params.t0, eta_floor)?;
        let sets = IndexSets::build(energy, &params, &locations, q)?;
        let shift = ShiftTable::build(init, params.t0, params.t1, locations[sets.center], SHIFT_KNOTS)?;
        Ok(Self { params, energy, q, locations, sets, shift })
    }
}
