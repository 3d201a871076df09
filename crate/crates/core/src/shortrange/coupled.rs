use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;
use std::io::Write;
use std::ops::Range;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{IndexSets, ShiftTable, ShortRangeParams};
use crate::ensembles::EnsembleDims;
use crate::error::{Error, Result};
use crate::rng::Seed;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupledConfig {
    pub dt: f64,
    pub gap_floor: f64,
    pub max_halvings: u32,
    pub reorder_on_exhaustion: bool,
    /// Drive every branch with zero increments.
    pub noiseless: bool,
    /// Keep a full [`CoupledRecord`] every this many steps.
    pub record_every: Option<usize>,
}

impl CoupledConfig {
    pub fn new(dt: f64) -> Self {
        Self { dt, gap_floor: 1e-9, max_halvings: 20, reorder_on_exhaustion: true, noiseless: false, record_every: None }
    }
}

/// Coupled GOE dynamics: short-range `ν̂` and full-range `ν`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoeBranch {
    pub nu_hat: Vec<f64>,
    pub nu: Vec<f64>,
}

/// One row of the coupled-run export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupledRecord {
    pub t: f64,
    pub ztilde: Vec<f64>,
    pub zhat: Vec<f64>,
    pub zwigner: Vec<f64>,
    pub error_sup: f64,
}

/// Running suprema after each accepted step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupRecord {
    pub t: f64,
    pub error_sup: f64,
    pub wigner_sup: f64,
}

/// Shifted full dynamics `z̃`, short-range dynamics `ẑ`, short-range Wigner
/// dynamics `z^W` (and optionally a GOE branch), all driven by the same
/// increments. Time runs from 0 at `t₀`.
///
/// Position `p ≥ N` receives `dB_{p−N}/√N` and its mirror receives the
/// negative, in every branch.
#[derive(Clone, Debug)]
pub struct CoupledSystem {
    pub dims: EnsembleDims,
    pub sets: IndexSets,
    pub shift: ShiftTable,
    pub config: CoupledConfig,
    pub time: f64,
    pub ztilde: Vec<f64>,
    pub zhat: Vec<f64>,
    pub zwigner: Vec<f64>,
    pub goe: Option<GoeBranch>,
    pub error_sup: f64,
    pub wigner_sup: f64,
    pub history: Vec<SupRecord>,
    pub records: Vec<CoupledRecord>,
    seed: Seed,
    rng: ChaCha8Rng,
    digest: DefaultHasher,
    halvings: u64,
    reorders: u64,
    steps: u64,
}

struct Proposal {
    ztilde: Vec<f64>,
    zhat: Vec<f64>,
    zwigner: Vec<f64>,
    goe: Option<GoeBranch>,
}

impl CoupledSystem {
    /// Start from the `N` positive eigenvalues `λ(t₀)` (ascending): every
    /// branch begins at `λ_p(t₀) − γ_E(t₀)`.
    pub fn new(
        dims: EnsembleDims,
        positive: &[f64],
        sets: IndexSets,
        shift: ShiftTable,
        config: CoupledConfig,
        seed: Seed,
    ) -> Result<Self> {
        let n = dims.n();
        if positive.len() != n || sets.size != 2 * n {
            return Err(Error::Mismatch(format!("{} eigenvalues and {} positions for N = {n}", positive.len(), sets.size)));
        }
        if !(config.dt > 0.0) {
            return Err(Error::InvalidArgument("dt must be positive".into()));
        }
        if positive.windows(2).any(|w| w[1] < w[0]) || positive.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument("eigenvalues must be finite, ≥ 0 and ascending".into()));
        }
        let g = shift.gamma_at(0.0);
        let z: Vec<f64> = positive.iter().rev().map(|v| -v - g).chain(positive.iter().map(|v| v - g)).collect();
        let mut sys = Self {
            dims,
            sets,
            shift,
            config,
            time: 0.0,
            ztilde: z.clone(),
            zhat: z.clone(),
            zwigner: z,
            goe: None,
            error_sup: 0.0,
            wigner_sup: 0.0,
            history: Vec::new(),
            records: Vec::new(),
            seed,
            rng: seed.rng(),
            digest: DefaultHasher::new(),
            halvings: 0,
            reorders: 0,
            steps: 0,
        };
        sys.observe();
        Ok(sys)
    }

    /// Attach GOE dynamics started from `nu0` (`2N` ascending values).
    pub fn attach_goe(&mut self, nu0: Vec<f64>) -> Result<()> {
        if nu0.len() != self.sets.size || nu0.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Mismatch(format!("GOE branch needs {} ascending values", self.sets.size)));
        }
        self.goe = Some(GoeBranch { nu_hat: nu0.clone(), nu: nu0 });
        Ok(())
    }

    pub fn seed(&self) -> Seed {
        self.seed
    }

    pub fn halvings(&self) -> u64 {
        self.halvings
    }

    pub fn reorders(&self) -> u64 {
        self.reorders
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Hash of every increment consumed so far.
    pub fn noise_digest(&self) -> u64 {
        self.digest.clone().finish()
    }

    /// Unshifted eigenvalues `z̃ + γ_E(t)` of the full branch.
    pub fn full_spectrum(&self) -> Vec<f64> {
        let g = self.shift.gamma_at(self.time);
        self.ztilde.iter().map(|z| z + g).collect()
    }

    /// Unshifted eigenvalues `ẑ + γ_E(t)` of the short-range branch.
    pub fn short_spectrum(&self) -> Vec<f64> {
        let g = self.shift.gamma_at(self.time);
        self.zhat.iter().map(|z| z + g).collect()
    }

    fn observe(&mut self) {
        let err = self.zhat.iter().zip(&self.ztilde).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let w = self.sets.window.clone();
        let wig = w.map(|p| (self.zhat[p] - self.zwigner[p]).abs()).fold(0.0, f64::max);
        self.error_sup = self.error_sup.max(err);
        self.wigner_sup = self.wigner_sup.max(wig);
        self.history.push(SupRecord { t: self.time, error_sup: self.error_sup, wigner_sup: self.wigner_sup });
        if let Some(k) = self.config.record_every {
            if k > 0 && self.steps % k as u64 == 0 {
                self.records.push(CoupledRecord {
                    t: self.time,
                    ztilde: self.ztilde.clone(),
                    zhat: self.zhat.clone(),
                    zwigner: self.zwigner.clone(),
                    error_sup: self.error_sup,
                });
            }
        }
    }

    pub fn step(&mut self) -> Result<()> {
        let n = self.dims.n();
        let dt = self.config.dt;
        let db: Vec<f64> = if self.config.noiseless {
            vec![0.0; n]
        } else {
            let sd = dt.sqrt();
            (0..n).map(|_| f64::standard_normal(&mut self.rng) * sd).collect()
        };
        self.advance(dt, db, 0)?;
        self.steps += 1;
        self.observe();
        Ok(())
    }

    fn advance(&mut self, dt: f64, db: Vec<f64>, depth: u32) -> Result<()> {
        let mut p = self.propose(dt, &db);
        match self.check(&mut p) {
            Ok(()) => {
                self.accept(dt, &db, p);
                Ok(())
            }
            Err(Error::Collision { .. }) if depth < self.config.max_halvings => {
                self.halvings += 1;
                let sd = (dt / 4.0).sqrt();
                let first: Vec<f64> = if self.config.noiseless {
                    vec![0.0; db.len()]
                } else {
                    db.iter().map(|&b| b / 2.0 + f64::standard_normal(&mut self.rng) * sd).collect()
                };
                let second: Vec<f64> = db.iter().zip(&first).map(|(b, f)| b - f).collect();
                self.advance(dt / 2.0, first, depth + 1)?;
                self.advance(dt / 2.0, second, depth + 1)
            }
            Err(Error::Collision { .. }) if self.config.reorder_on_exhaustion => {
                self.reorders += 1;
                for v in [&mut p.ztilde, &mut p.zhat, &mut p.zwigner] {
                    v.sort_by(f64::total_cmp);
                }
                if let Some(g) = &mut p.goe {
                    g.nu_hat.sort_by(f64::total_cmp);
                    g.nu.sort_by(f64::total_cmp);
                }
                self.accept(dt, &db, p);
                Ok(())
            }
            Err(e) => Err(e),
        }
    }

    fn accept(&mut self, dt: f64, db: &[f64], p: Proposal) {
        self.digest.write_u64(dt.to_bits());
        for b in db {
            self.digest.write_u64(b.to_bits());
        }
        self.ztilde = p.ztilde;
        self.zhat = p.zhat;
        self.zwigner = p.zwigner;
        self.goe = p.goe;
        self.time += dt;
    }

    fn propose(&self, dt: f64, db: &[f64]) -> Proposal {
        let size = self.sets.size;
        let n = self.dims.n();
        let inv_sqrt_n = 1.0 / (n as f64).sqrt();
        let inc: Vec<f64> = (0..size)
            .map(|p| if p >= n { db[p - n] * inv_sqrt_n } else { -db[n - 1 - p] * inv_sqrt_n })
            .collect();
        let inv2n = 1.0 / (2.0 * n as f64);
        let gamma = self.shift.gamma_at(self.time);
        let comp = self.shift.compensation_at(self.time);
        let trivial = self.dims.trivial_count() as f64 * inv2n;
        let sets = &self.sets;
        let (zt, zh, zw) = (&self.ztilde, &self.zhat, &self.zwigner);
        let mut ztilde = Vec::with_capacity(size);
        let mut zhat = Vec::with_capacity(size);
        let mut zwigner = Vec::with_capacity(size);
        for i in 0..size {
            let mirror = sets.mirror(i);
            let inside = sets.in_window(i);
            let (mut full, mut a, mut ac, mut wa, mut wall) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for j in 0..size {
                if j == i {
                    continue;
                }
                if j == mirror {
                    wall += 1.0 / (zw[i] - zw[j]);
                    continue;
                }
                let dfull = 1.0 / (zt[i] - zt[j]);
                full += dfull;
                let dw = 1.0 / (zw[i] - zw[j]);
                wall += dw;
                if sets.short_range(i, j) {
                    a += 1.0 / (zh[i] - zh[j]);
                    wa += dw;
                } else {
                    ac += dfull;
                }
            }
            let triv = if trivial > 0.0 { trivial / (zt[i] + gamma) } else { 0.0 };
            let mut d_tilde = full * inv2n + comp;
            let mut d_hat = if inside { a * inv2n } else { a * inv2n + ac * inv2n + comp };
            if trivial > 0.0 {
                d_tilde += triv;
                if !inside {
                    d_hat += triv;
                }
            }
            let d_w = if inside { wa * inv2n } else { wall * inv2n + comp };
            ztilde.push(zt[i] + inc[i] + d_tilde * dt);
            zhat.push(zh[i] + inc[i] + d_hat * dt);
            zwigner.push(zw[i] + inc[i] + d_w * dt);
        }
        let goe = self.goe.as_ref().map(|g| {
            let (vh, v) = (&g.nu_hat, &g.nu);
            let mut nu_hat = Vec::with_capacity(size);
            let mut nu = Vec::with_capacity(size);
            for i in 0..size {
                let inside = sets.in_window(i);
                let (mut a, mut rest, mut all) = (0.0, 0.0, 0.0);
                for j in 0..size {
                    if j == i {
                        continue;
                    }
                    let d = 1.0 / (v[i] - v[j]);
                    all += d;
                    if sets.short_range(i, j) {
                        a += 1.0 / (vh[i] - vh[j]);
                    } else {
                        rest += d;
                    }
                }
                let d_hat = if inside { a * inv2n } else { a * inv2n + rest * inv2n };
                nu_hat.push(vh[i] + inc[i] + d_hat * dt);
                nu.push(v[i] + inc[i] + all * inv2n * dt);
            }
            GoeBranch { nu_hat, nu }
        });
        Proposal { ztilde, zhat, zwigner, goe }
    }

    /// Ordering checks. In the covariance branches the mirror pair at the
    /// center does not interact: a square-case crossing is a reflection and
    /// is undone by swapping; in the rectangular case `z̃` must not cross the
    /// trivial zeros.
    fn check(&self, p: &mut Proposal) -> Result<()> {
        let floor = self.config.gap_floor;
        let n = self.dims.n();
        let gamma = self.shift.gamma_at(self.time);
        let ordered = |v: &[f64], skip: Option<usize>| -> Result<()> {
            for k in 0..v.len().saturating_sub(1) {
                if Some(k) == skip {
                    continue;
                }
                let gap = v[k + 1] - v[k];
                if !(gap >= floor) {
                    return Err(Error::Collision { gap, floor });
                }
            }
            Ok(())
        };
        let center = Some(n - 1);
        // Short-range branches also leave the center pair uncoupled when
        // both positions lie in the window.
        let inner = self.sets.in_window(n - 1) && self.sets.in_window(n);
        let mut uncoupled: Vec<&mut Vec<f64>> = vec![&mut p.ztilde, &mut p.zhat];
        if inner {
            uncoupled.push(&mut p.zwigner);
            if let Some(g) = &mut p.goe {
                uncoupled.push(&mut g.nu_hat);
            }
        }
        for v in uncoupled {
            if v[n] < v[n - 1] {
                v.swap(n - 1, n);
            }
        }
        let short_skip = if inner { center } else { None };
        if !self.dims.is_square() {
            let gap = (p.ztilde[n] + gamma).min(-(p.ztilde[n - 1] + gamma));
            if !(gap >= floor) {
                return Err(Error::Collision { gap, floor });
            }
        }
        ordered(&p.ztilde, center)?;
        ordered(&p.zhat, center)?;
        ordered(&p.zwigner, short_skip)?;
        if let Some(g) = &p.goe {
            ordered(&g.nu_hat, short_skip)?;
            ordered(&g.nu, None)?;
        }
        Ok(())
    }

    /// Take `steps` steps, calling `observer` after each.
    pub fn integrate_with<F: FnMut(&CoupledSystem)>(&mut self, steps: usize, mut observer: F) -> Result<()> {
        for _ in 0..steps {
            self.step()?;
            observer(self);
        }
        Ok(())
    }

    /// Integrate to the end of the shift table, `t₁`.
    pub fn run_to_end(&mut self) -> Result<()> {
        let t1 = *self.shift.times.last().expect("shift table has knots");
        let steps = ((t1 - self.time) / self.config.dt).round().max(0.0) as usize;
        self.integrate_with(steps, |_| {})
    }
}

/// Advance all branches by `steps` steps.
pub fn integrate_coupled(mut system: CoupledSystem, steps: usize) -> Result<CoupledSystem> {
    system.integrate_with(steps, |_| {})?;
    Ok(system)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShortRangeErrorReport {
    /// `sup_t sup_i |ẑ_i − z̃_i|`.
    pub measured: f64,
    /// `N^ε t₁ (N^{ω_A−ω₀} + N^{−ω_ℓ} + (NG)^{−1/2})`.
    pub bound: f64,
    pub epsilon: f64,
    pub horizon: f64,
    pub within: bool,
}

pub fn shortrange_error(system: &CoupledSystem, params: &ShortRangeParams, epsilon: f64) -> ShortRangeErrorReport {
    let nf = params.n as f64;
    let bound = nf.powf(epsilon)
        * params.t1
        * (nf.powf(params.omega_a - params.omega0) + nf.powf(-params.omega_l) + (nf * params.big_g).powf(-0.5));
    ShortRangeErrorReport {
        measured: system.error_sup,
        bound,
        epsilon,
        horizon: system.time,
        within: system.error_sup <= bound,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WignerCouplingReport {
    /// `sup_t sup_{i ∈ ℐ} |ẑ_i − z^W_i|`.
    pub distance: f64,
    pub scaled: f64,
    /// `N^{−1−δ}`.
    pub reference: f64,
    pub delta: f64,
    pub within: bool,
}

pub fn wigner_coupling_distance(system: &CoupledSystem, params: &ShortRangeParams, delta: f64) -> Result<WignerCouplingReport> {
    if system.sets.window.is_empty() || system.sets.window.end > system.zwigner.len() {
        return Err(Error::Mismatch("index window is empty or exceeds the Wigner branch".into()));
    }
    let nf = params.n as f64;
    let reference = nf.powf(-1.0 - delta);
    Ok(WignerCouplingReport {
        distance: system.wigner_sup,
        scaled: system.wigner_sup * nf,
        reference,
        delta,
        within: system.wigner_sup <= reference,
    })
}

pub fn write_coupled_ndjson<W: Write>(records: &[CoupledRecord], mut w: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Scaled nearest-neighbor gaps over a window of positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelRepulsion {
    /// `K ρ(γ_p) (λ_{p+1} − λ_p)` with `K` the number of eigenvalues.
    pub scaled_gaps: Vec<f64>,
    pub mean_scaled_gap: f64,
    /// `N^{−1+ε}`.
    pub threshold: f64,
    /// Fraction of unscaled gaps above the threshold.
    pub fraction_exceeding: f64,
}

/// Gap statistics of an ensemble of sorted spectra over `window`, with
/// `density[p]` the reference density at the classical location of `p`.
pub fn level_repulsion_stat<T: Real>(
    samples: &[Vec<T>],
    window: Range<usize>,
    density: &[f64],
    n: usize,
    epsilon: f64,
) -> Result<LevelRepulsion> {
    if samples.is_empty() || window.is_empty() {
        return Err(Error::Empty("no samples or empty window".into()));
    }
    let threshold = (n as f64).powf(-1.0 + epsilon);
    let mut scaled = Vec::new();
    let mut over = 0usize;
    for s in samples {
        if window.end >= s.len() || density.len() < window.end {
            return Err(Error::Mismatch("window exceeds the spectrum".into()));
        }
        let k = s.len() as f64;
        for p in window.clone() {
            let gap = (s[p + 1] - s[p]).as_f64();
            if gap > threshold {
                over += 1;
            }
            scaled.push(k * density[p] * gap);
        }
    }
    let mean = scaled.iter().sum::<f64>() / scaled.len() as f64;
    let fraction = over as f64 / scaled.len() as f64;
    Ok(LevelRepulsion { scaled_gaps: scaled, mean_scaled_gap: mean, threshold, fraction_exceeding: fraction })
}
