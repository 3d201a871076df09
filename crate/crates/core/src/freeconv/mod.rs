//! Free convolution of the symmetrized initial law with the semicircle,
//! reference densities, classical locations and the flow identities.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dbm::DriftMode;
use crate::ensembles::InitialData;
use crate::error::{Error, Result};
use crate::quadrature;
use crate::scalar::{cabs, cplx, Real, C};

mod cdf;

pub use cdf::{classical_locations, classical_locations_with_tolerance, NumericCdf, CDF_GRID_POINTS};

/// Normalization tolerance used when none is given.
pub const DEFAULT_MASS_TOLERANCE: f64 = 1e-4;

const NEWTON_ITERS: usize = 60;
const DAMPED_ITERS: usize = 200_000;

/// `R(w) = (1/2N) Σ [1/(V_i − w) + 1/(−V_i − w)] = (1/N) Σ w/(V_i² − w²)` and `R'(w)`.
fn symmetrized<T: Real>(v: &[T], w: C<T>) -> (C<T>, C<T>) {
    let mut r = cplx(T::zero(), T::zero());
    let mut dr = r;
    let w2 = w * w;
    for &vi in v {
        let v2 = cplx(vi * vi, T::zero());
        let d = v2 - w2;
        let inv = cplx(T::one(), T::zero()) / d;
        r += w * inv;
        dr += (v2 + w2) * inv * inv;
    }
    let n = T::from_usize_lossy(v.len());
    (r / n, dr / n)
}

/// `|m − RHS(m)|` for the free-convolution fixed point.
pub fn mfc_residual<T: Real>(init: &InitialData<T>, t: T, z: C<T>, m: C<T>) -> T {
    let (r, _) = symmetrized(&init.singular_values, z + m * t);
    cabs(m - r)
}

fn check_inputs<T: Real>(init: &InitialData<T>, t: T, z: C<T>, tol: T) -> Result<()> {
    if z.im <= T::zero() {
        return Err(Error::NotUpperHalfPlane(z.im.as_f64()));
    }
    if t < T::zero() {
        return Err(Error::InvalidArgument(format!("time must be non-negative, got {t}")));
    }
    if tol <= T::zero() {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    if init.is_empty() {
        return Err(Error::Empty("initial data has no singular values".into()));
    }
    Ok(())
}

/// Newton iterations at a fixed `z`; `None` if the iterate leaves ℂ₊ or stalls.
fn newton<T: Real>(v: &[T], t: T, z: C<T>, mut m: C<T>, tol: T) -> Option<C<T>> {
    let one = cplx(T::one(), T::zero());
    for _ in 0..NEWTON_ITERS {
        let (r, dr) = symmetrized(v, z + m * t);
        let f = m - r;
        if cabs(f) < tol {
            return Some(m);
        }
        let mut step = f / (one - dr * t);
        let mut accepted = false;
        for _ in 0..30 {
            let cand = m - step;
            if cand.im > T::zero() && (z + cand * t).im > T::zero() {
                m = cand;
                accepted = true;
                break;
            }
            step = step * T::lit(0.5);
        }
        if !accepted {
            return None;
        }
    }
    let (r, _) = symmetrized(v, z + m * t);
    (cabs(m - r) < tol).then_some(m)
}

/// Damped iteration `m ← (1−β)m + β·RHS(m)`.
fn damped<T: Real>(v: &[T], t: T, z: C<T>, mut m: C<T>, beta: T, tol: T) -> std::result::Result<C<T>, T> {
    let mut res = T::max_value().unwrap_or(T::one());
    for _ in 0..DAMPED_ITERS {
        let (r, _) = symmetrized(v, z + m * t);
        res = cabs(m - r);
        if res < tol && m.im > T::zero() {
            return Ok(m);
        }
        m = m * (T::one() - beta) + r * beta;
    }
    Err(res)
}

/// Solve the free-convolution fixed point `m_fc,t(z)`.
///
/// Newton's method is continued in `Im z` from a height where plain
/// iteration contracts, so the iterate stays on the Herglotz branch. If that
/// fails, damped iteration from `m = i` is tried with `β = 0.5`, then `0.1`.
pub fn solve_mfc<T: Real>(init: &InitialData<T>, t: T, z: C<T>, tol: T) -> Result<C<T>> {
    check_inputs(init, t, z, tol)?;
    let v = &init.singular_values;
    if t == T::zero() {
        return Ok(symmetrized(v, z).0);
    }
    let eta0 = z.im.max(T::lit(2.0) * t.sqrt() + T::one());
    let mut zk = cplx(z.re, eta0);
    let mut m = -cplx(T::one(), T::zero()) / zk;
    let mut ok = true;
    for _ in 0..200 {
        let (r, _) = symmetrized(v, zk + m * t);
        if cabs(m - r) < tol {
            break;
        }
        m = r;
    }
    loop {
        match newton(v, t, zk, m, tol * T::lit(0.1)).or_else(|| newton(v, t, zk, m, tol)) {
            Some(next) => m = next,
            None => {
                ok = false;
                break;
            }
        }
        if zk.im <= z.im {
            break;
        }
        zk.im = (zk.im * T::lit(0.5)).max(z.im);
    }
    if ok {
        return Ok(m);
    }
    let start = cplx(T::zero(), T::one());
    let mut last = T::zero();
    for beta in [0.5, 0.1] {
        match damped(v, t, z, start, T::lit(beta), tol) {
            Ok(m) => return Ok(m),
            Err(r) => last = r,
        }
    }
    Err(Error::NonConvergence { iterations: DAMPED_ITERS, residual: last.as_f64() })
}

/// `ρ_fc,t(E) ≈ Im m_fc,t(E + iη)/π` at `η = eta_floor`.
pub fn density_fc<T: Real>(init: &InitialData<T>, t: T, e: T, eta_floor: T) -> Result<T> {
    if eta_floor <= T::zero() {
        return Err(Error::InvalidArgument(format!("eta_floor must be positive, got {eta_floor}")));
    }
    let m = solve_mfc(init, t, cplx(e, eta_floor), tol_for::<T>())?;
    Ok(m.im / T::pi())
}

/// Working solver tolerance for the scalar type.
pub fn tol_for<T: Real>() -> T {
    T::lit((T::EPS * 1e3).max(1e-13))
}

/// Stieltjes transform of the Ornstein–Uhlenbeck flow,
/// `m_OU,t(z) = e^{t/2} m_fc,e^t−1(e^{t/2} z)`.
pub fn ou_stieltjes<T: Real>(init: &InitialData<T>, t: T, z: C<T>, tol: T) -> Result<C<T>> {
    let s = (t * T::lit(0.5)).exp();
    let m = solve_mfc(init, t.exp() - T::one(), z * s, tol)?;
    Ok(m * s)
}

fn field_at<T: Real>(init: &InitialData<T>, t: T, z: C<T>, mode: DriftMode) -> Result<C<T>> {
    match mode {
        DriftMode::Brownian => solve_mfc(init, t, z, tol_for::<T>()),
        DriftMode::OrnsteinUhlenbeck => ou_stieltjes(init, t, z, tol_for::<T>()),
    }
}

pub fn semicircle_density(e: f64) -> f64 {
    if e.abs() <= 2.0 {
        (4.0 - e * e).sqrt() / (2.0 * std::f64::consts::PI)
    } else {
        0.0
    }
}

/// Semicircle CDF in closed form.
pub fn semicircle_cdf(e: f64) -> f64 {
    let x = e.clamp(-2.0, 2.0);
    0.5 + (x * (4.0 - x * x).sqrt() / 4.0 + (x / 2.0).asin()) / std::f64::consts::PI
}

/// Linearized Marchenko–Pastur law with ratio `γ = M/N` and edges `λ± = (1 ± √γ)²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceLaws {
    pub mp_ratio: f64,
    pub mp_edges: (f64, f64),
}

impl ReferenceLaws {
    pub fn new(gamma: f64) -> Result<Self> {
        if gamma.is_nan() || gamma < 1.0 {
            return Err(Error::InvalidArgument(format!("MP ratio must be ≥ 1, got {gamma}")));
        }
        let r = gamma.sqrt();
        Ok(Self { mp_ratio: gamma, mp_edges: ((1.0 - r).powi(2), (1.0 + r).powi(2)) })
    }

    /// Density of the symmetrized singular-value law of an `M × N` block with
    /// entry variance `1/N`, normalized over the `2N` nontrivial eigenvalues:
    /// `√((λ₊ − E²)(E² − λ₋)) / (2π|E|)`.
    pub fn mp_density(&self, e: f64) -> f64 {
        let (lm, lp) = self.mp_edges;
        let e2 = e * e;
        if e2 < lm || e2 > lp {
            return 0.0;
        }
        let tail = if lm == 0.0 {
            1.0
        } else if e == 0.0 {
            return 0.0;
        } else {
            (e2 - lm).sqrt() / e.abs()
        };
        (lp - e2).sqrt() * tail / (2.0 * std::f64::consts::PI)
    }
}

pub fn mp_linearized_density(gamma: f64, e: f64) -> Result<f64> {
    Ok(ReferenceLaws::new(gamma)?.mp_density(e))
}

/// A probability density on the line with known (outer) support.
pub trait SpectralDensity: Sync {
    fn density(&self, e: f64) -> f64;
    fn support(&self) -> (f64, f64);
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Semicircle;

impl SpectralDensity for Semicircle {
    fn density(&self, e: f64) -> f64 {
        semicircle_density(e)
    }
    fn support(&self) -> (f64, f64) {
        (-2.0, 2.0)
    }
}

impl SpectralDensity for ReferenceLaws {
    fn density(&self, e: f64) -> f64 {
        self.mp_density(e)
    }
    fn support(&self) -> (f64, f64) {
        let r = self.mp_edges.1.sqrt();
        (-r, r)
    }
}

/// `ρ_fc,t` sampled at height `eta_floor` (or `ρ_OU,t` in OU mode).
#[derive(Clone, Debug)]
pub struct FcDensity<'a, T: Real> {
    pub init: &'a InitialData<T>,
    pub t: T,
    pub eta_floor: T,
    pub mode: DriftMode,
}

impl<'a, T: Real> FcDensity<'a, T> {
    pub fn new(init: &'a InitialData<T>, t: T, eta_floor: T) -> Self {
        Self { init, t, eta_floor, mode: DriftMode::Brownian }
    }

    pub fn with_mode(mut self, mode: DriftMode) -> Self {
        self.mode = mode;
        self
    }
}

impl<T: Real> SpectralDensity for FcDensity<'_, T> {
    fn density(&self, e: f64) -> f64 {
        field_at(self.init, self.t, cplx(T::lit(e), self.eta_floor), self.mode)
            .map(|m| m.im.as_f64() / std::f64::consts::PI)
            .unwrap_or(f64::NAN)
    }

    fn support(&self) -> (f64, f64) {
        let v = self.init.norm_inf().as_f64();
        let t = self.t.as_f64();
        let r = match self.mode {
            DriftMode::Brownian => v + 2.0 * t.sqrt(),
            DriftMode::OrnsteinUhlenbeck => (-t / 2.0).exp() * v + 2.0 * (1.0 - (-t).exp()).sqrt(),
        };
        (-r, r)
    }
}

/// Real part of `m(E + i0)` by Richardson extrapolation in `η`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrincipalValue {
    pub value: f64,
    /// Difference between the two first-level extrapolants.
    pub error: f64,
    /// `Im m(E + i·1e−5)/π`.
    pub density: f64,
}

pub const PV_ETAS: [f64; 3] = [1e-3, 1e-4, 1e-5];

pub fn principal_value<T: Real>(init: &InitialData<T>, t: T, e: T, mode: DriftMode) -> Result<PrincipalValue> {
    let mut f = [C::new(0.0, 0.0); 3];
    for (k, &eta) in PV_ETAS.iter().enumerate() {
        let m = field_at(init, t, cplx(e, T::lit(eta)), mode)?;
        f[k] = C::new(m.re.as_f64(), m.im.as_f64());
    }
    let r12 = (10.0 * f[1].re - f[0].re) / 9.0;
    let r23 = (10.0 * f[2].re - f[1].re) / 9.0;
    Ok(PrincipalValue {
        value: (100.0 * r23 - r12) / 99.0,
        error: (r23 - r12).abs(),
        density: f[2].im / std::f64::consts::PI,
    })
}

/// Density below which an energy is treated as outside the bulk.
pub const BULK_DENSITY_FLOOR: f64 = 1e-6;

/// Time derivative of the classical location through `E` at fixed quantile.
///
/// Brownian flow: `−Re m_fc,t(E)`. OU flow: `−Re m_OU,t(E) − E/2`.
pub fn gamma_e_derivative<T: Real>(init: &InitialData<T>, t: T, e: T, mode: DriftMode) -> Result<f64> {
    let pv = principal_value(init, t, e, mode)?;
    if !(pv.density > BULK_DENSITY_FLOOR) {
        return Err(Error::OutsideBulk(e.as_f64()));
    }
    Ok(match mode {
        DriftMode::Brownian => -pv.value,
        DriftMode::OrnsteinUhlenbeck => -pv.value - e.as_f64() / 2.0,
    })
}

/// Central-difference residual of the flow PDE.
///
/// Brownian: `|∂_t m − m ∂_z m|` on `m_fc,t`. OU: `|∂_t m − ½∂_z[m(m+z)]|` on
/// `m_OU,t`.
pub fn mfc_pde_residual<T: Real>(init: &InitialData<T>, t: T, z: C<T>, dt: T, dz: T, mode: DriftMode) -> Result<f64> {
    if dt <= T::zero() || dz <= T::zero() {
        return Err(Error::InvalidArgument("steps must be positive".into()));
    }
    if t - dt < T::zero() {
        return Err(Error::InvalidArgument(format!("time {t} too close to 0 for step {dt}")));
    }
    let two = T::lit(2.0);
    let m = field_at(init, t, z, mode)?;
    let mt = (field_at(init, t + dt, z, mode)? - field_at(init, t - dt, z, mode)?) / (two * dt);
    let dzc = cplx(dz, T::zero());
    let mz = (field_at(init, t, z + dzc, mode)? - field_at(init, t, z - dzc, mode)?) / (two * dz);
    let r = match mode {
        DriftMode::Brownian => mt - m * mz,
        DriftMode::OrnsteinUhlenbeck => mt - m * mz - (z * mz + m) * T::lit(0.5),
    };
    Ok(cabs(r).as_f64())
}

/// Solved free-convolution field on an energy grid at fixed height.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FreeConvolutionField<T: Real> {
    pub init: InitialData<T>,
    pub t: T,
    pub eta_floor: T,
    pub tol: T,
    pub grid: Vec<C<T>>,
    pub m_values: Vec<C<T>>,
    pub density: Vec<T>,
    pub classical_locations: Vec<f64>,
    pub max_residual: f64,
    pub mass: f64,
}

/// Sidecar record accompanying a field export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldMetadata {
    pub init_hash: String,
    pub t: f64,
    pub eta_floor: f64,
    pub tol: f64,
    pub max_residual: f64,
    pub mass: f64,
    pub grid_points: usize,
    pub locations: usize,
}

impl<T: Real> FreeConvolutionField<T> {
    /// Solve on `energies + i·eta_floor` and compute `locations` classical
    /// locations (quantiles `i/locations`).
    pub fn build(
        init: InitialData<T>,
        t: T,
        energies: &[f64],
        eta_floor: T,
        tol: T,
        locations: usize,
    ) -> Result<Self> {
        if eta_floor <= T::zero() {
            return Err(Error::InvalidArgument("eta_floor must be positive".into()));
        }
        let grid: Vec<C<T>> = energies.iter().map(|&e| cplx(T::lit(e), eta_floor)).collect();
        let m_values = grid
            .par_iter()
            .map(|&z| solve_mfc(&init, t, z, tol))
            .collect::<Result<Vec<_>>>()?;
        let max_residual = grid
            .iter()
            .zip(&m_values)
            .map(|(&z, &m)| mfc_residual(&init, t, z, m).as_f64())
            .fold(0.0, f64::max);
        let density = m_values.iter().map(|m| m.im / T::pi()).collect();
        let sampler = FcDensity::new(&init, t, eta_floor);
        let cdf = NumericCdf::build(&sampler)?;
        let classical_locations = if locations > 0 {
            cdf.check_mass(DEFAULT_MASS_TOLERANCE)?;
            cdf.classical_locations(locations)
        } else {
            Vec::new()
        };
        let mass = cdf.mass();
        Ok(Self { init, t, eta_floor, tol, grid, m_values, density, classical_locations, max_residual, mass })
    }

    pub fn metadata(&self) -> FieldMetadata {
        FieldMetadata {
            init_hash: format!("{:016x}", self.init.fingerprint()),
            t: self.t.as_f64(),
            eta_floor: self.eta_floor.as_f64(),
            tol: self.tol.as_f64(),
            max_residual: self.max_residual,
            mass: self.mass,
            grid_points: self.grid.len(),
            locations: self.classical_locations.len(),
        }
    }

    /// CSV with header `E,eta,re_m,im_m,rho`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        use crate::ensembles::io::fmt17;
        writeln!(w, "E,eta,re_m,im_m,rho")?;
        for ((z, m), rho) in self.grid.iter().zip(&self.m_values).zip(&self.density) {
            writeln!(
                w,
                "{},{},{},{},{}",
                fmt17(z.re.as_f64()),
                fmt17(z.im.as_f64()),
                fmt17(m.re.as_f64()),
                fmt17(m.im.as_f64()),
                fmt17(rho.as_f64())
            )?;
        }
        Ok(())
    }

    pub fn write_metadata<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, &self.metadata())?;
        Ok(())
    }
}

/// High-accuracy CDF of a density on `[a, x]` by composite Gauss–Legendre.
pub fn integrate_density<D: SpectralDensity + ?Sized>(d: &D, a: f64, x: f64, panels: usize) -> f64 {
    quadrature::integrate(|e| d.density(e), a, x, panels, 8)
}
