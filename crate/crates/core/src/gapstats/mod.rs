//! GOE coupling, gap observables, averaged correlation functions and the
//! comparison reports between the covariance flow and the GOE.
//!
//! Gaps are normalized as `K ρ (λ_{i+k} − λ_i)` with `K` the number of
//! eigenvalues of the spectrum (`2N` for the linearized covariance matrix),
//! so the mean normalized bulk gap is 1 for both ensembles.

mod observable;

use std::io::Write;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use observable::{bump_slope_sup, Bump, GapObservable, ObservableForm, BUMP_MASS};

use crate::dbm::{matrix_flow_sample, spectrum};
use crate::ensembles::io::fmt17;
use crate::ensembles::{LinearizedMatrix, SymTridiagonal};
use crate::error::{Error, Result};
use crate::freeconv::{classical_locations, semicircle_density, Semicircle};
use crate::quadrature;
use crate::rng::Seed;
use crate::scalar::Real;
use crate::shortrange::{CoupledSystem, ShortRangeSetup};
use crate::stats::Estimate;

pub const DENSITY_FLOOR: f64 = 1e-6;
pub const MIN_GAP_SAMPLES: usize = 100;

/// Affine map `x ↦ a x + b` carrying the GOE onto the covariance flow near
/// the coupled index.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingScale {
    pub index: usize,
    pub mu: f64,
    pub gamma: f64,
    pub rho_sc: f64,
    pub rho_fc: f64,
    pub a0: f64,
    pub b0: f64,
    /// Elapsed time of `a_t`, `b_t`.
    pub t: f64,
    pub a_t: f64,
    pub b_t: f64,
    /// `C` in `|a_t − a₀| ≤ C t`.
    pub drift_constant: f64,
}

impl CouplingScale {
    /// Evolve under the GOE flow: `a₀ W + √t W'` has the law of
    /// `√(a₀² + t) W''`, so `a_t = √(a₀² + t)` and `b_t = b₀`.
    pub fn at(&self, t: f64) -> Self {
        Self { t, a_t: (self.a0 * self.a0 + t).sqrt(), b_t: self.b0, ..*self }
    }

    pub fn apply(&self, x: f64) -> f64 {
        self.a0 * x + self.b0
    }

    /// Density reference `ρ_sc(μ_i)/a_t` of the evolved GOE branch.
    pub fn goe_density(&self) -> f64 {
        self.rho_sc / self.a_t
    }
}

/// `a₀ = ρ_sc(μ_i)/ρ_fc(γ_i)`, `b₀ = γ_i − a₀ μ_i`, and the transformed
/// spectrum `a₀·spec(W) + b₀`.
pub fn goe_initial_coupling(
    index: usize,
    gamma: f64,
    rho_fc: f64,
    goe_locations: &[f64],
    goe_spectrum: &[f64],
) -> Result<(CouplingScale, Vec<f64>)> {
    let mu = *goe_locations
        .get(index)
        .ok_or_else(|| Error::Mismatch(format!("index {index} beyond {} GOE locations", goe_locations.len())))?;
    if !(rho_fc >= DENSITY_FLOOR) {
        return Err(Error::OutsideBulk(gamma));
    }
    let rho_sc = semicircle_density(mu);
    if !(rho_sc >= DENSITY_FLOOR) {
        return Err(Error::OutsideBulk(mu));
    }
    let a0 = rho_sc / rho_fc;
    let b0 = gamma - a0 * mu;
    let scale = CouplingScale {
        index,
        mu,
        gamma,
        rho_sc,
        rho_fc,
        a0,
        b0,
        t: 0.0,
        a_t: a0,
        b_t: b0,
        drift_constant: 1.0 / (2.0 * a0),
    };
    let mut spec: Vec<f64> = goe_spectrum.iter().map(|&x| scale.apply(x)).collect();
    spec.sort_by(f64::total_cmp);
    Ok((scale, spec))
}

/// Coupling at the center of a short-range setup with a fresh `2N` GOE
/// sample.
pub fn coupling_from_setup(setup: &ShortRangeSetup, seed: Seed) -> Result<(CouplingScale, Vec<f64>)> {
    let size = setup.locations.len();
    let mu = classical_locations(&Semicircle, size)?;
    let w = SymTridiagonal::<f64>::sample_goe(size, seed)?.eigenvalues();
    let k = setup.sets.center;
    goe_initial_coupling(k, setup.locations[k], setup.shift.density_at(0.0), &mu, &w)
}

/// Least-squares `ν ≈ a μ + b` over the middle third of the indices.
pub fn refit_affine(nu: &[f64], mu: &[f64]) -> Result<(f64, f64)> {
    if nu.len() != mu.len() || nu.len() < 3 {
        return Err(Error::Mismatch(format!("refit of {} values against {} locations", nu.len(), mu.len())));
    }
    let k = nu.len();
    let r = k / 3..(2 * k).div_ceil(3);
    let m = r.len() as f64;
    let mx = mu[r.clone()].iter().sum::<f64>() / m;
    let my = nu[r.clone()].iter().sum::<f64>() / m;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for p in r {
        sxy += (mu[p] - mx) * (nu[p] - my);
        sxx += (mu[p] - mx) * (mu[p] - mx);
    }
    if sxx <= 0.0 {
        return Err(Error::Degenerate(sxx));
    }
    let a = sxy / sxx;
    Ok((a, my - a * mx))
}

/// Logged gaps `x_{i+k} − x_i`, `k = 1..=K`, with the density reference
/// used to normalize them.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GapTrace {
    pub times: Vec<f64>,
    pub scale: Vec<f64>,
    pub gaps: Vec<Vec<f64>>,
}

impl GapTrace {
    fn push(&mut self, t: f64, scale: f64, values: &[f64], base: usize, kmax: usize) {
        self.times.push(t);
        self.scale.push(scale);
        self.gaps.push((1..=kmax).map(|k| values[base + k] - values[base]).collect());
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoupledGoeRun {
    pub coupling: Option<CouplingScale>,
    pub covariance: GapTrace,
    pub goe: GapTrace,
    pub a_analytic: Vec<f64>,
    pub a_fit: Vec<f64>,
    pub b_fit: Vec<f64>,
}

/// Integrate a coupled system with an attached GOE branch to the end of its
/// shift table, logging the short-range gaps of both branches at the
/// coupled index every `log_every` steps (and at both ends).
pub fn run_coupled_goe(
    system: &mut CoupledSystem,
    coupling: &CouplingScale,
    kmax: usize,
    log_every: usize,
) -> Result<CoupledGoeRun> {
    if system.goe.is_none() {
        return Err(Error::InvalidArgument("no GOE branch attached".into()));
    }
    let size = system.sets.size;
    let base = coupling.index;
    if kmax == 0 || base + kmax >= size || log_every == 0 {
        return Err(Error::InvalidArgument(format!("gaps up to {kmax} from {base} in a spectrum of {size}")));
    }
    let mu = classical_locations(&Semicircle, size)?;
    let mut run = CoupledGoeRun { coupling: Some(*coupling), ..Default::default() };
    let log = |sys: &CoupledSystem, run: &mut CoupledGoeRun| -> Result<()> {
        let goe = sys.goe.as_ref().expect("checked above");
        let evolved = coupling.at(sys.time);
        let (a, b) = refit_affine(&goe.nu, &mu)?;
        run.covariance.push(sys.time, sys.shift.density_at(sys.time), &sys.zhat, base, kmax);
        run.goe.push(sys.time, evolved.goe_density(), &goe.nu_hat, base, kmax);
        run.a_analytic.push(evolved.a_t);
        run.a_fit.push(a);
        run.b_fit.push(b);
        Ok(())
    };
    log(system, &mut run)?;
    let t_end = *system.shift.times.last().expect("shift table has knots");
    let steps = ((t_end - system.time) / system.config.dt).round().max(0.0) as usize;
    for s in 1..=steps {
        system.step()?;
        if s % log_every == 0 {
            log(system, &mut run)?;
        }
    }
    if steps % log_every != 0 {
        log(system, &mut run)?;
    }
    Ok(run)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapComparisonReport {
    /// `sup_t max_k |ρ_cov δλ̂_k − ρ_goe δν̂_k|`.
    pub statistic: f64,
    /// `N · statistic`.
    pub scaled: f64,
    /// `N^{−1−ε}`.
    pub reference: f64,
    pub epsilon: f64,
    pub worst_time: f64,
    pub worst_offset: usize,
    pub within: bool,
}

pub fn gap_comparison_report(cov: &GapTrace, goe: &GapTrace, n: usize, epsilon: f64) -> Result<GapComparisonReport> {
    if cov.times != goe.times || cov.gaps.len() != goe.gaps.len() || cov.scale.len() != goe.scale.len() {
        return Err(Error::Mismatch("covariance and GOE time logs differ".into()));
    }
    if cov.times.is_empty() {
        return Err(Error::Empty("no logged times".into()));
    }
    let (mut sup, mut worst_time, mut worst_offset) = (0.0f64, cov.times[0], 1);
    for (s, t) in cov.times.iter().enumerate() {
        if cov.gaps[s].len() != goe.gaps[s].len() {
            return Err(Error::Mismatch(format!("gap counts differ at t = {t}")));
        }
        for (k, (x, y)) in cov.gaps[s].iter().zip(&goe.gaps[s]).enumerate() {
            let d = (cov.scale[s] * x - goe.scale[s] * y).abs();
            if d > sup {
                (sup, worst_time, worst_offset) = (d, *t, k + 1);
            }
        }
    }
    let nf = n as f64;
    let reference = nf.powf(-1.0 - epsilon);
    Ok(GapComparisonReport {
        statistic: sup,
        scaled: nf * sup,
        reference,
        epsilon,
        worst_time,
        worst_offset,
        within: sup <= reference,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Covariance,
    Goe,
}

/// Samples of (part of) a spectrum of `size` eigenvalues; `values[s][0]`
/// is eigenvalue number `first`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapEnsemble {
    pub which: Branch,
    pub size: usize,
    pub first: usize,
    pub values: Vec<Vec<f64>>,
}

impl GapEnsemble {
    pub fn full(which: Branch, values: Vec<Vec<f64>>) -> Result<Self> {
        let size = values.first().map_or(0, Vec::len);
        if values.iter().any(|v| v.len() != size) {
            return Err(Error::Mismatch("spectra of different lengths".into()));
        }
        Ok(Self { which, size, first: 0, values })
    }

    pub fn partial(which: Branch, size: usize, first: usize, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.iter().any(|v| first + v.len() > size) {
            return Err(Error::Mismatch(format!("slice past the end of a spectrum of {size}")));
        }
        Ok(Self { which, size, first, values })
    }

    /// Eigenvalues `range` of `count` GOE samples of dimension `size`,
    /// mapped by `x ↦ a x + b`.
    pub fn goe(size: usize, range: Range<usize>, count: usize, seed: Seed, affine: (f64, f64)) -> Result<Self> {
        if range.end > size {
            return Err(Error::InvalidArgument(format!("indices {range:?} of a {size}-dimensional GOE")));
        }
        let values = (0..count as u64)
            .into_par_iter()
            .map(|s| {
                let w = SymTridiagonal::<f64>::sample_goe(size, seed.substream(s))?;
                Ok(w.eigenvalues_range(range.clone()).into_iter().map(|x| affine.0 * x + affine.1).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::partial(Branch::Goe, size, range.start, values)
    }

    /// Nontrivial spectra (`−s` reversed then `s`) of `X₀ + √t W_ℓ`.
    pub fn covariance<T: Real>(x0: &LinearizedMatrix<T>, t: f64, count: usize, seed: Seed) -> Result<Self> {
        let values = (0..count as u64)
            .into_par_iter()
            .map(|s| {
                let x = matrix_flow_sample(x0, T::lit(t), seed.substream(s))?;
                Ok(nontrivial_spectrum(spectrum(&x)?.positive()))
            })
            .collect::<Result<Vec<_>>>()?;
        let size = values.first().map_or(0, Vec::len);
        Self::partial(Branch::Covariance, size, 0, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn at(&self, s: usize, p: usize) -> Result<f64> {
        p.checked_sub(self.first)
            .and_then(|q| self.values[s].get(q).copied())
            .ok_or_else(|| Error::InvalidArgument(format!("eigenvalue {p} not stored in sample {s}")))
    }

    /// `K ρ (λ_{i+i_k} − λ_i)` for each sample.
    pub fn scaled_gaps(&self, offsets: &[usize], base: usize, rho: f64) -> Result<Vec<Vec<f64>>> {
        let k = self.size as f64;
        (0..self.len())
            .map(|s| {
                let lb = self.at(s, base)?;
                offsets.iter().map(|&o| Ok(k * rho * (self.at(s, base + o)? - lb))).collect()
            })
            .collect()
    }
}

/// Eigenvalues in `[lo, hi)` of `count` GOE samples of dimension `size`.
pub fn goe_window_spectra(size: usize, lo: f64, hi: f64, count: usize, seed: Seed) -> Result<Vec<Vec<f64>>> {
    (0..count as u64)
        .into_par_iter()
        .map(|s| {
            let w = SymTridiagonal::<f64>::sample_goe(size, seed.substream(s))?;
            Ok(w.eigenvalues_range(w.indices_in(lo, hi)))
        })
        .collect()
}

/// `[−s_N, …, −s_1, s_1, …, s_N]` from ascending positive values.
pub fn nontrivial_spectrum<T: Real>(positive: &[T]) -> Vec<f64> {
    let mut out: Vec<f64> = positive.iter().rev().map(|s| -s.as_f64()).collect();
    out.extend(positive.iter().map(|s| s.as_f64()));
    out
}

/// Monte Carlo mean of `O(K ρ (λ_{i+i₁} − λ_i), …)`.
pub fn gap_observable_estimate(ens: &GapEnsemble, obs: &GapObservable, base: usize, rho: f64) -> Result<Estimate> {
    if ens.len() < MIN_GAP_SAMPLES {
        return Err(Error::InvalidArgument(format!("{} samples, need at least {MIN_GAP_SAMPLES}", ens.len())));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidArgument(format!("density reference {rho}")));
    }
    let values = ens
        .scaled_gaps(&obs.offsets, base, rho)?
        .iter()
        .map(|x| obs.eval(x))
        .collect::<Result<Vec<_>>>()?;
    Ok(Estimate::from_samples(&values))
}

/// CSV `sample,offset,scaled_gap` of the normalized gaps.
pub fn write_gap_csv<W: Write>(ens: &GapEnsemble, offsets: &[usize], base: usize, rho: f64, mut w: W) -> Result<()> {
    writeln!(w, "sample,offset,scaled_gap")?;
    for (s, row) in ens.scaled_gaps(offsets, base, rho)?.iter().enumerate() {
        for (o, x) in offsets.iter().zip(row) {
            writeln!(w, "{s},{o},{}", fmt17(*x))?;
        }
    }
    Ok(())
}

/// Energy window of an averaged correlation function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationWindow {
    pub e0: f64,
    pub c: f64,
    pub b: f64,
    /// GOE reference energy `E''`.
    pub e_ref: f64,
}

impl CorrelationWindow {
    /// `b = N^c / N`.
    pub fn new(n: usize, e0: f64, c: f64) -> Self {
        let nf = n as f64;
        Self { e0, c, b: nf.powf(c) / nf, e_ref: 0.0 }
    }

    pub fn with_reference(mut self, e_ref: f64) -> Self {
        self.e_ref = e_ref;
        self
    }
}

/// One side of a correlation comparison.
#[derive(Clone, Copy, Debug)]
pub struct CorrelationInput<'a> {
    pub spectra: &'a [Vec<f64>],
    /// Eigenvalue count `K` of the full spectrum.
    pub size: usize,
    pub energy: f64,
    /// `ρ` at `energy`.
    pub rho: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSide {
    pub estimate: Estimate,
    pub mean_count: f64,
}

/// Per sample, `K^n (K−n)!/K! · Σ_{distinct} (2b)^{-1} ∫ Π_k O_k(Kρ(λ_{j_k} − E')) dE'`
/// over `E' ∈ [energy − b, energy + b]`: the window average of the
/// `n`-point correlation function tested against `O`.
///
/// Fails when the window holds fewer than `min_count` eigenvalues per
/// sample on average.
pub fn correlation_side(input: &CorrelationInput, b: f64, obs: &GapObservable, min_count: f64) -> Result<CorrelationSide> {
    let ObservableForm::ProductBump { bumps } = &obs.form else {
        return Err(Error::InvalidArgument("correlation observables must be compactly supported".into()));
    };
    let n = bumps.len();
    if input.spectra.is_empty() {
        return Err(Error::Empty("no spectra".into()));
    }
    if input.size < n || !(input.rho > 0.0) || !(b > 0.0) {
        return Err(Error::InvalidArgument(format!("K = {}, ρ = {}, b = {b}", input.size, input.rho)));
    }
    let (lo, hi) = (input.energy - b, input.energy + b);
    let count: usize = input
        .spectra
        .iter()
        .map(|s| s.partition_point(|&x| x <= hi) - s.partition_point(|&x| x < lo))
        .sum();
    let mean_count = count as f64 / input.spectra.len() as f64;
    if mean_count < min_count {
        return Err(Error::InvalidArgument(format!(
            "window [{lo:.5}, {hi:.5}] holds {mean_count:.2} eigenvalues per sample, need {min_count}"
        )));
    }
    let kr = input.size as f64 * input.rho;
    let norm: f64 = (0..n).map(|j| input.size as f64 / (input.size - j) as f64).product();
    let narrow = bumps.iter().map(|bp| bp.width).fold(f64::INFINITY, f64::min) / kr;
    let panels = ((2.0 * b) / (narrow / 8.0)).ceil().max(1.0) as usize;
    let values: Vec<f64> = input
        .spectra
        .par_iter()
        .map(|spec| {
            let integrand = |e: f64| {
                let factors: Vec<Vec<(usize, f64)>> = bumps
                    .iter()
                    .map(|bp| {
                        let (a, z) = bp.support();
                        let from = spec.partition_point(|&x| x <= e + a / kr);
                        let to = spec.partition_point(|&x| x < e + z / kr);
                        (from..to).map(|j| (j, bp.eval(kr * (spec[j] - e)))).filter(|&(_, v)| v != 0.0).collect()
                    })
                    .collect();
                distinct_product_sum(&factors, &mut Vec::with_capacity(n))
            };
            norm * quadrature::integrate(integrand, lo, hi, panels, 8) / (2.0 * b)
        })
        .collect();
    Ok(CorrelationSide { estimate: Estimate::from_samples(&values), mean_count })
}

/// `Σ Π_k f_k(j_k)` over tuples with pairwise distinct `j_k`.
fn distinct_product_sum(factors: &[Vec<(usize, f64)>], used: &mut Vec<usize>) -> f64 {
    let Some((head, rest)) = factors.split_first() else {
        return 1.0;
    };
    let mut total = 0.0;
    for &(j, v) in head {
        if used.contains(&j) {
            continue;
        }
        used.push(j);
        total += v * distinct_product_sum(rest, used);
        used.pop();
    }
    total
}

/// Covariance versus GOE expectations with their combined error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniversalityReport {
    pub label: String,
    pub covariance: Estimate,
    pub goe: Estimate,
    pub difference: Estimate,
    pub c1_norm: f64,
    pub window: Option<CorrelationWindow>,
}

impl UniversalityReport {
    pub fn new(label: impl Into<String>, covariance: Estimate, goe: Estimate, obs: &GapObservable) -> Self {
        Self {
            label: label.into(),
            covariance,
            goe,
            difference: covariance.minus(&goe),
            c1_norm: obs.c1_norm(),
            window: None,
        }
    }

    pub fn combined_stderr(&self) -> f64 {
        self.difference.stderr
    }

    /// `|difference| ≤ tolerance + sigmas · combined stderr`.
    pub fn within(&self, tolerance: f64, sigmas: f64) -> bool {
        self.difference.mean.abs() <= tolerance + sigmas * self.difference.stderr
    }
}

/// Gap universality comparison at index `base` for both ensembles.
pub fn gap_universality_report(
    cov: &GapEnsemble,
    rho_fc: f64,
    goe: &GapEnsemble,
    rho_sc: f64,
    obs: &GapObservable,
    base: usize,
    goe_base: usize,
) -> Result<UniversalityReport> {
    let c = gap_observable_estimate(cov, obs, base, rho_fc)?;
    let g = gap_observable_estimate(goe, obs, goe_base, rho_sc)?;
    Ok(UniversalityReport::new(format!("gaps {:?}", obs.offsets), c, g, obs))
}

/// Averaged `n`-point correlation of the covariance flow at `E₀` against
/// the GOE at `E''`.
pub fn correlation_estimate(
    cov: &CorrelationInput,
    goe: &CorrelationInput,
    window: CorrelationWindow,
    obs: &GapObservable,
    min_count: Option<f64>,
) -> Result<UniversalityReport> {
    let min_count = min_count.unwrap_or(10.0 * obs.arity() as f64);
    let cov = CorrelationInput { energy: window.e0, ..*cov };
    let goe = CorrelationInput { energy: window.e_ref, ..*goe };
    let c = correlation_side(&cov, window.b, obs, min_count)?;
    let g = correlation_side(&goe, window.b, obs, min_count)?;
    let mut report =
        UniversalityReport::new(format!("{}-point correlation", obs.arity()), c.estimate, g.estimate, obs);
    report.window = Some(window);
    Ok(report)
}

pub fn write_reports_ndjson<W: Write>(reports: &[UniversalityReport], mut w: W) -> Result<()> {
    for r in reports {
        serde_json::to_writer(&mut w, r)?;
        writeln!(w)?;
    }
    Ok(())
}

/// Fixed-width table of the reports.
pub fn summary_table(reports: &[UniversalityReport]) -> String {
    let mut out = format!(
        "{:<28} {:>12} {:>12} {:>12} {:>10} {:>8}\n",
        "observable", "covariance", "goe", "difference", "stderr", "samples"
    );
    for r in reports {
        out.push_str(&format!(
            "{:<28} {:>12.6} {:>12.6} {:>12.6} {:>10.2e} {:>8}\n",
            r.label, r.covariance.mean, r.goe.mean, r.difference.mean, r.difference.stderr, r.difference.samples
        ));
    }
    out
}
