//! Local-law, rigidity, self-consistency and resolvent statistics measured
//! on simulated spectra.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dbm::{DriftMode, SpectrumState, StepLog};
use crate::ensembles::{InitialData, LinearizedMatrix};
use crate::error::{Error, Result};
use crate::freeconv::{solve_mfc, FreeConvolutionField};
use crate::scalar::{Real, C};

/// Bulk spectral domain: `E ∈ [E0 − qG, E0 + qG]`, `η ∈ [eta_min, eta_max]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralDomain {
    pub e0: f64,
    pub q: f64,
    pub big_g: f64,
    pub eta_min: f64,
    pub eta_max: f64,
    /// Exponent `L` of the domain family; recorded only.
    pub l_exp: f64,
    pub b_v: f64,
}

impl SpectralDomain {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.eta_min >= 1.0 / n as f64) || !(self.eta_max >= self.eta_min) {
            return Err(Error::InvalidArgument(format!(
                "need 1/N ≤ eta_min ≤ eta_max, got {} and {}",
                self.eta_min, self.eta_max
            )));
        }
        if !(self.q > 0.0 && self.q < 1.0) || !(self.big_g > 0.0) {
            return Err(Error::InvalidArgument("need 0 < q < 1 and G > 0".into()));
        }
        Ok(())
    }

    /// `n_e` uniform energies times `n_eta` geometric heights.
    pub fn points(&self, n_e: usize, n_eta: usize) -> Vec<Complex64> {
        let half = self.q * self.big_g;
        let es: Vec<f64> = if n_e <= 1 {
            vec![self.e0]
        } else {
            (0..n_e).map(|k| self.e0 - half + 2.0 * half * k as f64 / (n_e - 1) as f64).collect()
        };
        let etas: Vec<f64> = if n_eta <= 1 {
            vec![self.eta_min]
        } else {
            let r = (self.eta_max / self.eta_min).ln();
            (0..n_eta).map(|k| self.eta_min * (r * k as f64 / (n_eta - 1) as f64).exp()).collect()
        };
        etas.iter().flat_map(|&eta| es.iter().map(move |&e| Complex64::new(e, eta))).collect()
    }
}

/// Configurable high-probability constants; the pass threshold for scaled
/// statistics is `(log N)^{phi_exponent · xi}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticThresholds {
    pub xi: f64,
    pub nu: f64,
    pub phi_exponent: f64,
}

impl Default for DiagnosticThresholds {
    fn default() -> Self {
        Self { xi: 1.0, nu: 1.0, phi_exponent: 3.0 }
    }
}

impl DiagnosticThresholds {
    pub fn validate(&self) -> Result<()> {
        if self.xi > 0.0 && self.nu > 0.0 && self.phi_exponent > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidArgument("thresholds must be positive".into()))
        }
    }

    pub fn polylog(&self, n: usize) -> f64 {
        (n as f64).ln().powf(self.phi_exponent * self.xi)
    }
}

/// `(1/len) Σ 1/(λ − z)`.
pub fn stieltjes_of(eigs: &[f64], z: Complex64) -> Complex64 {
    eigs.iter().map(|&l| 1.0 / (l - z)).sum::<Complex64>() / eigs.len() as f64
}

/// `m_N(z) = (1/2N) Σ_α (1/(λ_α − z) + 1/(−λ_α − z))`, trivial zeros excluded.
pub fn partial_stieltjes<T: Real>(state: &SpectrumState<T>, z: Complex64) -> Result<Complex64> {
    if z.im <= 0.0 {
        return Err(Error::NotUpperHalfPlane(z.im));
    }
    Ok(symmetric_stieltjes(state.positive().iter().map(|v| v.as_f64()), z))
}

fn symmetric_stieltjes<I: ExactSizeIterator<Item = f64>>(positive: I, z: Complex64) -> Complex64 {
    let n = positive.len() as f64;
    let w2 = z * z;
    // 1/(λ − z) + 1/(−λ − z) = 2z/(λ² − z²)
    positive.map(|l| z / (l * l - w2)).sum::<Complex64>() / n
}

fn to_c64<T: Real>(z: C<T>) -> Complex64 {
    Complex64::new(z.re.as_f64(), z.im.as_f64())
}

/// `Λ(z) = |m_N(z) − m_fc,t(z)|`.
pub fn local_law_gap<T: Real>(state: &SpectrumState<T>, field: &FreeConvolutionField<T>, z: Complex64) -> Result<f64> {
    let mn = partial_stieltjes(state, z)?;
    let mfc = solve_mfc(&field.init, field.t, C::new(T::lit(z.re), T::lit(z.im)), field.tol)?;
    Ok((mn - to_c64(mfc)).norm())
}

/// `N |λ_i − γ_i|` for sorted nontrivial eigenvalues against classical
/// locations of the same count, over `window`.
pub fn rigidity_scaled(eigs: &[f64], locations: &[f64], n: usize, window: std::ops::Range<usize>) -> Result<Vec<f64>> {
    if eigs.len() != locations.len() {
        return Err(Error::Mismatch(format!("{} eigenvalues vs {} classical locations", eigs.len(), locations.len())));
    }
    if window.is_empty() || window.end > eigs.len() {
        return Err(Error::Empty(format!("rigidity window {window:?} of {}", eigs.len())));
    }
    Ok(window.map(|i| n as f64 * (eigs[i] - locations[i]).abs()).collect())
}

/// Rigidity profile of a state against a field holding `2N` classical
/// locations; indices run over the sorted nontrivial spectrum.
pub fn rigidity_profile<T: Real>(
    state: &SpectrumState<T>,
    field: &FreeConvolutionField<T>,
    window: std::ops::Range<usize>,
) -> Result<Vec<f64>> {
    let eigs = nontrivial_sorted(state);
    rigidity_scaled(&eigs, &field.classical_locations, state.dims().n(), window)
}

/// `−λ_N … −λ_1, λ_1 … λ_N`.
pub fn nontrivial_sorted<T: Real>(state: &SpectrumState<T>) -> Vec<f64> {
    let p: Vec<f64> = state.positive().iter().map(|v| v.as_f64()).collect();
    p.iter().rev().map(|v| -v).chain(p.iter().copied()).collect()
}

/// Indices `i` with `lo ≤ γ_i ≤ hi`.
pub fn bulk_window(locations: &[f64], lo: f64, hi: f64) -> std::ops::Range<usize> {
    let a = locations.partition_point(|&g| g < lo);
    let b = locations.partition_point(|&g| g <= hi);
    a..b.max(a)
}

/// `|m − (1/2N) Σ (1/(V_i − w) + 1/(−V_i − w))|` with `w = z + t m`.
fn sce_of(v: &[f64], t: f64, z: Complex64, m: Complex64) -> Result<f64> {
    let w = z + t * m;
    let w2 = w * w;
    let mut acc = Complex64::new(0.0, 0.0);
    for &vi in v {
        let d = vi * vi - w2;
        if d.norm() < 1e-14 {
            return Err(Error::Singular(format!("V_i = {vi} meets w = {w}")));
        }
        acc += w / d;
    }
    Ok((m - acc / v.len() as f64).norm())
}

/// Self-consistent equation residual of the empirical transform.
pub fn sce_residual<T: Real>(state: &SpectrumState<T>, init: &InitialData<T>, t: f64, z: Complex64) -> Result<f64> {
    let m = partial_stieltjes(state, z)?;
    let v: Vec<f64> = init.singular_values.iter().map(|x| x.as_f64()).collect();
    sce_of(&v, t, z, m)
}

/// `(Λ_o, Λ_d)` from the dense resolvent `G = (X − z)^{-1}` restricted to
/// the coordinates `i, j > M`.
pub fn green_function_stats<T: Real>(x: &LinearizedMatrix<T>, z: Complex64) -> Result<(f64, f64)> {
    if z.im <= 0.0 {
        return Err(Error::NotUpperHalfPlane(z.im));
    }
    let g = resolvent_columns(x, z)?;
    let (m, n) = (x.dims().m(), x.dims().n());
    let mut lo: f64 = 0.0;
    let mut ld: f64 = 0.0;
    for c in 0..n {
        for r in 0..n {
            let v = g[(m + r, c)].norm();
            if r == c {
                ld = ld.max(v);
            } else {
                lo = lo.max(v);
            }
        }
    }
    Ok((lo, ld))
}

/// Columns `M..M+N` of `(X − z)^{-1}`.
pub fn resolvent_columns<T: Real>(x: &LinearizedMatrix<T>, z: Complex64) -> Result<DMatrix<Complex64>> {
    let (m, n) = (x.dims().m(), x.dims().n());
    let size = m + n;
    let dense = x.dense();
    let a = DMatrix::from_fn(size, size, |i, j| {
        let v = Complex64::new(dense[(i, j)].as_f64(), 0.0);
        if i == j {
            v - z
        } else {
            v
        }
    });
    let rhs = DMatrix::from_fn(size, n, |i, j| if i == m + j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) });
    a.lu().solve(&rhs).ok_or_else(|| Error::Singular("resolvent solve failed".into()))
}

/// Drift of `m_N(z)` along the eigenvalue SDE, per unit time.
///
/// With `m_N = (1/2N) Σ_α 1/(λ_α − z)` over the `2N` signed labels and
/// `dλ_α = dB_α/√N + b_α dt`, Itô's formula gives
/// `dm = −(1/2N) Σ_α b_α/(λ_α − z)² dt + (1/2N²) Σ_α 1/(λ_α − z)³ dt
///       − (1/2N) Σ_α dB_α/(√N (λ_α − z)²)`.
/// The interaction part of `b_α` is symmetrized into
/// `(1/8N²) Σ_{α, β ≠ ±α} (λ_α + λ_β − 2z)/((λ_α − z)²(λ_β − z)²)`.
pub fn stieltjes_drift(positive: &[f64], z: Complex64, trivial: usize, mode: DriftMode) -> Complex64 {
    let n = positive.len();
    let nf = n as f64;
    let labels: Vec<f64> = positive.iter().map(|v| -v).chain(positive.iter().copied()).collect();
    let inv2: Vec<Complex64> = labels.iter().map(|&l| 1.0 / ((l - z) * (l - z))).collect();
    let mut pair = Complex64::new(0.0, 0.0);
    for a in 0..2 * n {
        let mirror = (a + n) % (2 * n);
        for b in 0..2 * n {
            if b == a || b == mirror {
                continue;
            }
            pair += (labels[a] + labels[b] - 2.0 * z) * inv2[a] * inv2[b];
        }
    }
    let mut drift = pair / (8.0 * nf * nf);
    if trivial > 0 {
        let s: Complex64 = labels.iter().zip(&inv2).map(|(&l, &i2)| i2 / l).sum();
        drift -= trivial as f64 * s / (4.0 * nf * nf);
    }
    drift += ito_weights(positive, z).iter().sum::<Complex64>() / (2.0 * nf * nf);
    if mode == DriftMode::OrnsteinUhlenbeck {
        // b_α gains −λ_α/2.
        let s: Complex64 = labels.iter().zip(&inv2).map(|(&l, &i2)| l * i2).sum();
        drift += s / (4.0 * nf);
    }
    drift
}

/// `1/(s_i − z)³ + 1/(−s_i − z)³` for each positive value.
fn ito_weights(positive: &[f64], z: Complex64) -> Vec<Complex64> {
    positive.iter().map(|&s| 1.0 / ((s - z) * (s - z) * (s - z)) + 1.0 / ((-s - z) * (-s - z) * (-s - z))).collect()
}

/// Martingale increment `−(1/2N) Σ_α dB_α/(√N (λ_α − z)²)` with
/// `dB_{−α} = −dB_α`.
pub fn stieltjes_martingale(positive: &[f64], db: &[f64], z: Complex64) -> Complex64 {
    let nf = positive.len() as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for (&l, &b) in positive.iter().zip(db) {
        acc += b / ((l - z) * (l - z)) - b / ((-l - z) * (-l - z));
    }
    -acc / (2.0 * nf * nf.sqrt())
}

/// `|Δm_N − Σ(drift·dt + martingale)|` over the logged steps in `[t0, t1]`.
///
/// The second-order term is charged with the realized `dB_α²` instead of
/// `dt`, so a noiseless log is audited against its own Euler scheme.
pub fn stieltjes_sde_audit(log: &StepLog, z: Complex64, window: (f64, f64)) -> Result<f64> {
    if z.im <= 0.0 {
        return Err(Error::NotUpperHalfPlane(z.im));
    }
    let n = log.dims.n();
    if log.initial.len() != n || log.steps.iter().any(|s| s.db.len() != n || s.after.len() != n) {
        return Err(Error::Mismatch("noise and trajectory records disagree".into()));
    }
    if log.rect_drift != crate::dbm::RectDrift::Half {
        return Err(Error::Mismatch("audit assumes the (M−N)/(2Nλ) drift".into()));
    }
    let trivial = log.dims.trivial_count();
    let eps = 1e-12;
    let mut t = log.start_time;
    let mut prev: &[f64] = &log.initial;
    let mut realized = Complex64::new(0.0, 0.0);
    let mut predicted = Complex64::new(0.0, 0.0);
    let mut used = 0usize;
    for s in &log.steps {
        let t_next = t + s.dt;
        if t >= window.0 - eps && t_next <= window.1 + eps {
            realized += symmetric_stieltjes(s.after.iter().copied(), z) - symmetric_stieltjes(prev.iter().copied(), z);
            let nf = n as f64;
            let w = ito_weights(prev, z);
            let ito_dt: Complex64 = w.iter().sum::<Complex64>() * s.dt;
            let ito_path: Complex64 = w.iter().zip(&s.db).map(|(wi, b)| wi * b * b).sum();
            predicted += stieltjes_drift(prev, z, trivial, log.mode) * s.dt + (ito_path - ito_dt) / (2.0 * nf * nf)
                + stieltjes_martingale(prev, &s.db, z);
            used += 1;
        }
        prev = &s.after;
        t = t_next;
    }
    if used == 0 {
        return Err(Error::Empty(format!("no logged steps inside [{}, {}]", window.0, window.1)));
    }
    Ok((realized - predicted).norm())
}

/// One evaluation point of a local-law report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalLawRow {
    pub t: f64,
    #[serde(rename = "E")]
    pub e: f64,
    pub eta: f64,
    pub lambda_gap: f64,
    pub lambda_o: Option<f64>,
    pub lambda_d: Option<f64>,
    pub sce_residual: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LocalLawSummary {
    pub points: usize,
    pub sup_lambda_gap: f64,
    /// `sup Λ · Nη`.
    pub sup_scaled_gap: f64,
    pub sup_sce_residual: f64,
    pub sup_lambda_o: Option<f64>,
    pub sup_lambda_d: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LocalLawReport {
    pub n: usize,
    pub rows: Vec<LocalLawRow>,
}

impl LocalLawReport {
    pub fn new(n: usize) -> Self {
        Self { n, rows: Vec::new() }
    }

    pub fn summary(&self) -> LocalLawSummary {
        let opt_max = |f: &dyn Fn(&LocalLawRow) -> Option<f64>| {
            self.rows.iter().filter_map(f).fold(None, |a: Option<f64>, v| Some(a.map_or(v, |a| a.max(v))))
        };
        LocalLawSummary {
            points: self.rows.len(),
            sup_lambda_gap: self.rows.iter().map(|r| r.lambda_gap).fold(0.0, f64::max),
            sup_scaled_gap: self.rows.iter().map(|r| r.lambda_gap * self.n as f64 * r.eta).fold(0.0, f64::max),
            sup_sce_residual: self.rows.iter().map(|r| r.sce_residual).fold(0.0, f64::max),
            sup_lambda_o: opt_max(&|r| r.lambda_o),
            sup_lambda_d: opt_max(&|r| r.lambda_d),
        }
    }

    pub fn write_ndjson<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.rows {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Evaluate `Λ` and the SCE residual for one state at every domain point.
pub fn local_law_rows(
    positive: &[f64],
    init: &InitialData<f64>,
    t: f64,
    points: &[Complex64],
    x: Option<&LinearizedMatrix<f64>>,
) -> Result<Vec<LocalLawRow>> {
    let v = &init.singular_values;
    points
        .iter()
        .map(|&z| {
            let mn = symmetric_stieltjes(positive.iter().copied(), z);
            let mfc = solve_mfc(init, t, z, crate::freeconv::tol_for::<f64>())?;
            let (lo, ld) = match x {
                Some(x) => {
                    let (a, b) = green_function_stats(x, z)?;
                    (Some(a), Some(b))
                }
                None => (None, None),
            };
            Ok(LocalLawRow {
                t,
                e: z.re,
                eta: z.im,
                lambda_gap: (mn - mfc).norm(),
                lambda_o: lo,
                lambda_d: ld,
                sce_residual: sce_of(v, t, z, mn)?,
            })
        })
        .collect()
}

/// `Λ` over a time partition of the logged trajectory with spacing at most
/// `grid_gap` (always including the first and last logged states).
pub fn time_grid_sweep(
    log: &StepLog,
    init: &InitialData<f64>,
    points: &[Complex64],
    grid_gap: f64,
) -> Result<LocalLawReport> {
    if !(grid_gap > 0.0) {
        return Err(Error::InvalidArgument("grid_gap must be positive".into()));
    }
    let states = log.states();
    let mut chosen = vec![0usize];
    let mut last_t = states[0].0;
    for k in 1..states.len() {
        let next_t = states.get(k + 1).map(|s| s.0);
        // Keep k if skipping it would open a gap larger than grid_gap.
        if k == states.len() - 1 || next_t.is_some_and(|nt| nt - last_t > grid_gap * (1.0 + 1e-12)) {
            chosen.push(k);
            last_t = states[k].0;
        }
    }
    let mut report = LocalLawReport::new(log.dims.n());
    for k in chosen {
        let (t, p) = states[k];
        report.rows.extend(local_law_rows(p, init, t, points, None)?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests;
