use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DriftMode;
use crate::ensembles::{EnsembleDims, InitialData};
use crate::error::{Error, Result};
use crate::rng::{Seed, StreamPosition};
use crate::scalar::Real;

/// Ordered spectrum of the linearization.
///
/// Only the `N` nontrivial eigenvalues `0 ≤ λ_1 < … < λ_N` are stored; the
/// mirrored half `λ_{−α} = −λ_α` and the `M − N` trivial zeros are implied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SpectrumState<T: Real> {
    pub time: T,
    dims: EnsembleDims,
    positive: Vec<T>,
    /// Set when repeated values were separated by `1e−12 · i`.
    pub jittered: bool,
}

impl<T: Real> SpectrumState<T> {
    pub fn from_positive(dims: EnsembleDims, time: T, positive: Vec<T>) -> Result<Self> {
        if positive.len() != dims.n() {
            return Err(Error::InvalidDims(format!("{} eigenvalues for N = {}", positive.len(), dims.n())));
        }
        if positive.iter().any(|&v| v < T::zero() || !v.is_finite()) {
            return Err(Error::InvalidArgument("nontrivial eigenvalues must be finite and ≥ 0".into()));
        }
        if positive.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument("eigenvalues must be sorted ascending".into()));
        }
        Ok(Self { time, dims, positive, jittered: false })
    }

    /// Initial state `λ_α = V_α`, separating ties by `1e−12 · i`.
    pub fn from_initial(init: &InitialData<T>, dims: EnsembleDims) -> Result<Self> {
        let mut s: Vec<T> = init.singular_values.iter().map(|v| v.abs()).collect();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        let jittered = s.windows(2).any(|w| w[1] <= w[0]);
        if jittered {
            for (i, v) in s.iter_mut().enumerate() {
                *v += T::lit(1e-12 * i as f64);
            }
        }
        if !dims.is_square() && s.first().is_some_and(|&v| v <= T::zero()) {
            return Err(Error::InvalidArgument("rectangular flow needs min |V_i| > 0".into()));
        }
        let mut state = Self::from_positive(dims, T::zero(), s)?;
        state.jittered = jittered;
        Ok(state)
    }

    pub fn dims(&self) -> EnsembleDims {
        self.dims
    }

    pub fn trivial_count(&self) -> usize {
        self.dims.trivial_count()
    }

    /// `λ_1..λ_N`, ascending.
    pub fn positive(&self) -> &[T] {
        &self.positive
    }

    /// All `M + N` eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Vec<T> {
        let mut e: Vec<T> = self.positive.iter().rev().map(|&v| -v).collect();
        e.extend(std::iter::repeat(T::zero()).take(self.trivial_count()));
        e.extend_from_slice(&self.positive);
        e
    }

    /// Position of the partner `−α` of sorted position `k`.
    pub fn pair(&self, k: usize) -> usize {
        self.dims.size() - 1 - k
    }
}

/// Coefficient of the `(M − N)/(N λ)` repulsion from the trivial zeros.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RectDrift {
    /// `(M − N)/(2Nλ)`.
    #[default]
    Half,
    /// `(M − N)/(Nλ)`.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdeConfig {
    pub dt: f64,
    pub mode: DriftMode,
    pub gap_floor: f64,
    pub max_halvings: u32,
    pub rect_drift: RectDrift,
    /// After `max_halvings` rejections, accept the step with reflected and
    /// re-sorted values instead of failing.
    #[serde(default)]
    pub reorder_on_exhaustion: bool,
}

impl SdeConfig {
    pub fn new(dt: f64, mode: DriftMode) -> Self {
        Self { dt, mode, gap_floor: 1e-9, max_halvings: 20, rect_drift: RectDrift::Half, reorder_on_exhaustion: false }
    }

    pub fn with_rect_drift(mut self, rect_drift: RectDrift) -> Self {
        self.rect_drift = rect_drift;
        self
    }

    pub fn with_reorder_on_exhaustion(mut self, on: bool) -> Self {
        self.reorder_on_exhaustion = on;
        self
    }
}

/// Brownian increments `dB_α` (variance `dt`) for the positive indices; the
/// increment of `−α` is `−dB_α` and the trivial block receives none.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct NoisePath<T: Real> {
    pub seed: Seed,
    pub increments: Vec<T>,
}

impl<T: Real> NoisePath<T> {
    pub fn draw<R: Rng + ?Sized>(seed: Seed, rng: &mut R, n: usize, dt: T) -> Self {
        let sd = dt.sqrt();
        Self { seed, increments: (0..n).map(|_| T::standard_normal(rng) * sd).collect() }
    }

    /// Increments for all `M + N` sorted positions.
    pub fn mirrored(&self, dims: EnsembleDims) -> Vec<T> {
        let mut out: Vec<T> = self.increments.iter().rev().map(|&b| -b).collect();
        out.extend(std::iter::repeat(T::zero()).take(dims.trivial_count()));
        out.extend_from_slice(&self.increments);
        out
    }
}

/// Drift of each positive eigenvalue:
/// `(1/2N)[Σ_{j≠i} (1/(λ_i − λ_j) + 1/(λ_i + λ_j)) + c(M − N)/λ_i]`, minus
/// `λ_i/2` in OU mode, with `c = 1` ([`RectDrift::Half`]) or `2`.
pub fn drift<T: Real>(positive: &[T], dims: EnsembleDims, mode: DriftMode, rect: RectDrift) -> Vec<T> {
    let n = positive.len();
    let mut d = vec![T::zero(); n];
    for i in 0..n {
        let si = positive[i];
        for j in i + 1..n {
            let sj = positive[j];
            let a = T::one() / (si - sj);
            let b = T::one() / (si + sj);
            d[i] += a + b;
            d[j] += b - a;
        }
    }
    let trivial = T::from_usize_lossy(dims.trivial_count())
        * match rect {
            RectDrift::Half => T::one(),
            RectDrift::Full => T::lit(2.0),
        };
    let scale = T::one() / (T::lit(2.0) * T::from_usize_lossy(dims.n()));
    for i in 0..n {
        if dims.trivial_count() > 0 {
            d[i] += trivial / positive[i];
        }
        d[i] *= scale;
        if mode == DriftMode::OrnsteinUhlenbeck {
            d[i] -= positive[i] * T::lit(0.5);
        }
    }
    d
}

fn raw_euler<T: Real>(state: &[T], dt: T, db: &[T], dims: EnsembleDims, cfg: &SdeConfig) -> Vec<T> {
    let d = drift(state, dims, cfg.mode, cfg.rect_drift);
    let inv_sqrt_n = T::one() / T::from_usize_lossy(dims.n()).sqrt();
    (0..state.len()).map(|i| state[i] + db[i] * inv_sqrt_n + d[i] * dt).collect()
}

fn euler<T: Real>(state: &[T], dt: T, db: &[T], dims: EnsembleDims, cfg: &SdeConfig) -> Result<Vec<T>> {
    let floor = T::lit(cfg.gap_floor);
    let mut next = raw_euler(state, dt, db, dims, cfg);
    if dims.is_square() {
        // λ and −λ do not interact; a crossing of 0 is a reflection.
        for v in &mut next {
            *v = v.abs();
        }
    } else if let Some(&first) = next.first() {
        if first < floor {
            return Err(Error::Collision { gap: first.as_f64(), floor: cfg.gap_floor });
        }
    }
    for w in next.windows(2) {
        if !(w[1] - w[0] >= floor) {
            return Err(Error::Collision { gap: (w[1] - w[0]).as_f64(), floor: cfg.gap_floor });
        }
    }
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::Collision { gap: f64::NAN, floor: cfg.gap_floor });
    }
    Ok(next)
}

/// One Euler–Maruyama step with the default gap floor and drift coefficient.
/// Returns [`Error::Collision`] when the step must be retried with `dt/2`.
pub fn step_eigen_sde<T: Real>(
    state: &SpectrumState<T>,
    dt: T,
    noise: &NoisePath<T>,
    mode: DriftMode,
    dims: EnsembleDims,
) -> Result<SpectrumState<T>> {
    if dims != state.dims || noise.increments.len() != dims.n() {
        return Err(Error::Mismatch("state, noise and dims disagree".into()));
    }
    let cfg = SdeConfig::new(dt.as_f64(), mode);
    let positive = euler(&state.positive, dt, &noise.increments, dims, &cfg)?;
    Ok(SpectrumState { time: state.time + dt, dims, positive, jittered: state.jittered })
}

/// Single-owner trajectory of the eigenvalue SDE with step rejection.
///
/// A rejected step is split in two halves whose increments are drawn from
/// the Brownian bridge pinned at the original increment, so the law of the
/// path is unchanged by refinement.
#[derive(Clone, Debug)]
pub struct EigenIntegrator<T: Real> {
    config: SdeConfig,
    state: SpectrumState<T>,
    seed: Seed,
    rng: ChaCha8Rng,
    halvings: u64,
    reorders: u64,
    steps: u64,
    log: Option<StepLog>,
}

/// Every accepted (sub-)step of a trajectory with the Brownian increments
/// that drove it, in `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub dims: EnsembleDims,
    pub mode: DriftMode,
    pub rect_drift: RectDrift,
    pub start_time: f64,
    pub initial: Vec<f64>,
    pub steps: Vec<LoggedStep>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoggedStep {
    pub dt: f64,
    pub db: Vec<f64>,
    pub after: Vec<f64>,
}

impl StepLog {
    /// `(time, positive eigenvalues)` before the first step and after each step.
    pub fn states(&self) -> Vec<(f64, &[f64])> {
        let mut t = self.start_time;
        let mut out = vec![(t, self.initial.as_slice())];
        for s in &self.steps {
            t += s.dt;
            out.push((t, s.after.as_slice()));
        }
        out
    }

    /// Drive a log by explicit increments with plain Euler steps (no rejection).
    pub fn from_increments(
        dims: EnsembleDims,
        mode: DriftMode,
        initial: Vec<f64>,
        increments: &[(f64, Vec<f64>)],
    ) -> Result<Self> {
        let cfg = SdeConfig::new(1.0, mode);
        let mut cur = initial.clone();
        let mut steps = Vec::with_capacity(increments.len());
        for (dt, db) in increments {
            if db.len() != cur.len() {
                return Err(Error::Mismatch("increment length differs from spectrum".into()));
            }
            cur = euler(&cur, *dt, db, dims, &cfg)?;
            steps.push(LoggedStep { dt: *dt, db: db.clone(), after: cur.clone() });
        }
        Ok(Self { dims, mode, rect_drift: RectDrift::Half, start_time: 0.0, initial, steps })
    }
}

/// Everything needed to resume a trajectory bit-exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Checkpoint<T: Real> {
    pub config: SdeConfig,
    pub state: SpectrumState<T>,
    pub position: StreamPosition,
    pub halvings: u64,
    pub reorders: u64,
    pub steps: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub eigenvalues: Vec<f64>,
    pub seed: Seed,
    pub mode: DriftMode,
}

impl<T: Real> EigenIntegrator<T> {
    pub fn new(state: SpectrumState<T>, config: SdeConfig, seed: Seed) -> Result<Self> {
        if !(config.dt > 0.0) || !(config.gap_floor >= 0.0) {
            return Err(Error::InvalidArgument("dt must be positive and gap_floor non-negative".into()));
        }
        Ok(Self { config, state, seed, rng: seed.rng(), halvings: 0, reorders: 0, steps: 0, log: None })
    }

    /// Start recording every accepted sub-step from the current state.
    pub fn enable_log(&mut self) {
        self.log = Some(StepLog {
            dims: self.state.dims,
            mode: self.config.mode,
            rect_drift: self.config.rect_drift,
            start_time: self.time(),
            initial: self.state.positive.iter().map(|v| v.as_f64()).collect(),
            steps: Vec::new(),
        });
    }

    pub fn take_log(&mut self) -> Option<StepLog> {
        self.log.take()
    }

    fn accept(&mut self, dt: T, db: &[T], next: Vec<T>) {
        if let Some(log) = &mut self.log {
            log.steps.push(LoggedStep {
                dt: dt.as_f64(),
                db: db.iter().map(|v| v.as_f64()).collect(),
                after: next.iter().map(|v| v.as_f64()).collect(),
            });
        }
        self.state.positive = next;
        self.state.time += dt;
    }

    pub fn state(&self) -> &SpectrumState<T> {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.state.time.as_f64()
    }

    /// Number of step halvings performed so far.
    pub fn halvings(&self) -> u64 {
        self.halvings
    }

    /// Steps accepted through [`SdeConfig::reorder_on_exhaustion`].
    pub fn reorders(&self) -> u64 {
        self.reorders
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self) -> Result<()> {
        self.step_by(T::lit(self.config.dt))
    }

    fn step_by(&mut self, dt: T) -> Result<()> {
        let n = self.state.dims.n();
        let noise = NoisePath::draw(self.seed, &mut self.rng, n, dt);
        self.advance(dt, noise.increments, 0)?;
        self.steps += 1;
        Ok(())
    }

    fn advance(&mut self, dt: T, db: Vec<T>, depth: u32) -> Result<()> {
        match euler(&self.state.positive, dt, &db, self.state.dims, &self.config) {
            Ok(next) => {
                self.accept(dt, &db, next);
                Ok(())
            }
            Err(Error::Collision { .. }) if depth < self.config.max_halvings => {
                self.halvings += 1;
                let half = dt * T::lit(0.5);
                let sd = (dt * T::lit(0.25)).sqrt();
                let first: Vec<T> =
                    db.iter().map(|&b| b * T::lit(0.5) + T::standard_normal(&mut self.rng) * sd).collect();
                let second: Vec<T> = db.iter().zip(&first).map(|(&b, &f)| b - f).collect();
                self.advance(half, first, depth + 1)?;
                self.advance(half, second, depth + 1)
            }
            Err(Error::Collision { .. }) if self.config.reorder_on_exhaustion => {
                self.reorders += 1;
                let mut next = raw_euler(&self.state.positive, dt, &db, self.state.dims, &self.config);
                for v in &mut next {
                    *v = v.abs();
                }
                next.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
                self.accept(dt, &db, next);
                Ok(())
            }
            Err(e) => Err(e),
        }
    }

    /// Step until `t_end`; the last step is shortened to land on it.
    pub fn advance_to(&mut self, t_end: f64) -> Result<()> {
        let dt = self.config.dt;
        let start = self.time();
        if t_end < start {
            return Err(Error::InvalidArgument(format!("cannot integrate backwards to {t_end} from {start}")));
        }
        let full = ((t_end - start) / dt * (1.0 + 1e-12)).floor() as u64;
        for _ in 0..full {
            self.step()?;
        }
        let rest = t_end - start - full as f64 * dt;
        if rest > 1e-12 * dt.max(1.0) {
            self.step_by(T::lit(rest))?;
        }
        self.state.time = T::lit(t_end);
        Ok(())
    }

    pub fn record(&self) -> TrajectoryRecord {
        TrajectoryRecord {
            t: self.time(),
            eigenvalues: self.state.eigenvalues().iter().map(|v| v.as_f64()).collect(),
            seed: self.seed,
            mode: self.config.mode,
        }
    }

    pub fn checkpoint(&self) -> Checkpoint<T> {
        Checkpoint {
            config: self.config.clone(),
            state: self.state.clone(),
            position: StreamPosition::capture(self.seed, &self.rng),
            halvings: self.halvings,
            reorders: self.reorders,
            steps: self.steps,
        }
    }

    pub fn restore(cp: &Checkpoint<T>) -> Self {
        Self {
            config: cp.config.clone(),
            state: cp.state.clone(),
            seed: cp.position.seed,
            rng: cp.position.restore(),
            halvings: cp.halvings,
            reorders: cp.reorders,
            steps: cp.steps,
            log: None,
        }
    }
}

/// NDJSON, one record per line.
pub fn write_trajectory<W: Write>(records: &[TrajectoryRecord], mut w: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dbm::{matrix_flow_sample, spectrum};
    use crate::ensembles::{linearize, sample_rect_gaussian, svd_initial_data};
    use crate::stats::ks_two_sample;
    use proptest::prelude::*;

    #[test]
    fn single_pair_has_no_drift() {
        let dims = EnsembleDims::square(1).unwrap();
        let d = drift(&[0.8f64], dims, DriftMode::Brownian, RectDrift::Half);
        assert_eq!(d, vec![0.0]);
        let state = SpectrumState::from_positive(dims, 0.0, vec![0.8]).unwrap();
        let noise = NoisePath { seed: Seed::new(0), increments: vec![0.01] };
        let next = step_eigen_sde(&state, 1e-4, &noise, DriftMode::Brownian, dims).unwrap();
        assert_eq!(next.positive(), &[0.81]);
    }

    #[test]
    fn rectangular_drift_coefficient() {
        let dims = EnsembleDims::new(2, 1).unwrap();
        let half = drift(&[0.5f64], dims, DriftMode::Brownian, RectDrift::Half);
        let full = drift(&[0.5f64], dims, DriftMode::Brownian, RectDrift::Full);
        assert!((half[0] - 1.0).abs() < 1e-15);
        assert!((full[0] - 2.0).abs() < 1e-15);
        let ou = drift(&[0.5f64], dims, DriftMode::OrnsteinUhlenbeck, RectDrift::Half);
        assert!((ou[0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn drift_matches_full_signed_sum() {
        let dims = EnsembleDims::new(7, 4).unwrap();
        let s = [0.3f64, 0.9, 1.4, 2.2];
        let d = drift(&s, dims, DriftMode::Brownian, RectDrift::Half);
        let state = SpectrumState::from_positive(dims, 0.0, s.to_vec()).unwrap();
        let all = state.eigenvalues();
        for (a, &si) in s.iter().enumerate() {
            let k = dims.m() + a;
            let mut sum = 0.0;
            for (b, &lb) in all.iter().enumerate() {
                if b == k || b == state.pair(k) || lb == 0.0 {
                    continue;
                }
                sum += 1.0 / (si - lb);
            }
            let expect = (sum + 3.0 / si) / 8.0;
            assert!((d[a] - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn bessel_process_at_two_by_one() {
        let dims = EnsembleDims::new(2, 1).unwrap();
        let init = InitialData::new(vec![1.0]);
        let x0 = linearize(init.to_block(dims).unwrap());
        let paths = 4000;
        let matrix: Vec<f64> = (0..paths)
            .map(|s| spectrum(&matrix_flow_sample(&x0, 1.0, Seed::with_stream(1, s)).unwrap()).unwrap().positive()[0])
            .collect();
        let sde = |rect| -> Vec<f64> {
            (0..paths)
                .map(|s| {
                    let state = SpectrumState::from_initial(&init, dims).unwrap();
                    let cfg = SdeConfig::new(1e-3, DriftMode::Brownian).with_rect_drift(rect);
                    let mut it = EigenIntegrator::new(state, cfg, Seed::with_stream(2, s)).unwrap();
                    it.advance_to(1.0).unwrap();
                    it.state().positive()[0]
                })
                .collect()
        };
        assert!(ks_two_sample(&matrix, &sde(RectDrift::Half)) < 0.05);
        assert!(ks_two_sample(&matrix, &sde(RectDrift::Full)) > 0.1);
    }

    #[test]
    fn square_flow_matches_matrix_oracle() {
        let n = 12;
        let dims = EnsembleDims::square(n).unwrap();
        let init = svd_initial_data(&sample_rect_gaussian::<f64>(dims, Seed::new(3)).unwrap());
        let x0 = linearize(init.to_block(dims).unwrap());
        let t = 0.3;
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut reorders = 0;
        for s in 0..400 {
            a.extend(spectrum(&matrix_flow_sample(&x0, t, Seed::with_stream(4, s)).unwrap()).unwrap().eigenvalues());
            let mut it = EigenIntegrator::new(
                SpectrumState::from_initial(&init, dims).unwrap(),
                SdeConfig::new(1e-4, DriftMode::Brownian).with_reorder_on_exhaustion(true),
                Seed::with_stream(5, s),
            )
            .unwrap();
            it.advance_to(t).unwrap();
            reorders += it.reorders();
            b.extend(it.state().eigenvalues());
        }
        assert!(ks_two_sample(&a, &b) < 0.05);
        assert!(reorders < 10);
    }

    #[test]
    fn collisions_trigger_halving_and_rect_floor() {
        let dims = EnsembleDims::new(3, 2).unwrap();
        let state = SpectrumState::from_positive(dims, 0.0, vec![0.5f64, 0.6]).unwrap();
        let noise = NoisePath { seed: Seed::new(0), increments: vec![-5.0, 0.0] };
        assert!(matches!(
            step_eigen_sde(&state, 1e-3, &noise, DriftMode::Brownian, dims),
            Err(Error::Collision { .. })
        ));
        let close = SpectrumState::from_positive(dims, 0.0, vec![0.5f64, 0.5 + 2e-6]).unwrap();
        let mut it = EigenIntegrator::new(close, SdeConfig::new(1e-2, DriftMode::Brownian), Seed::new(6)).unwrap();
        for _ in 0..50 {
            it.step().unwrap();
        }
        assert!(it.halvings() > 0);
        let p = it.state().positive();
        assert!(p[0] > 0.0 && p[1] > p[0]);
    }

    #[test]
    fn initial_ties_are_jittered() {
        let dims = EnsembleDims::square(3).unwrap();
        let s = SpectrumState::from_initial(&InitialData::new(vec![1.0f64, 1.0, 0.0]), dims).unwrap();
        assert!(s.jittered);
        assert!(s.positive().windows(2).all(|w| w[1] > w[0]));
        let rect = EnsembleDims::new(4, 3).unwrap();
        assert!(SpectrumState::from_initial(&InitialData::new(vec![1.0f64, 0.5, 0.0]), rect).is_err());
    }

    #[test]
    fn checkpoint_restore_is_bit_exact() {
        let dims = EnsembleDims::new(6, 4).unwrap();
        let init = InitialData::new(vec![0.4f64, 0.9, 1.3, 2.0]);
        let cfg = SdeConfig::new(1e-3, DriftMode::OrnsteinUhlenbeck);
        let mut a = EigenIntegrator::new(SpectrumState::from_initial(&init, dims).unwrap(), cfg, Seed::new(7)).unwrap();
        a.advance_to(0.05).unwrap();
        let cp = a.checkpoint();
        let json = serde_json::to_string(&cp).unwrap();
        let mut b = EigenIntegrator::restore(&serde_json::from_str::<Checkpoint<f64>>(&json).unwrap());
        a.advance_to(0.1).unwrap();
        b.advance_to(0.1).unwrap();
        assert_eq!(a.state(), b.state());
        let mut out = Vec::new();
        write_trajectory(&[a.record(), b.record()], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], lines[1]);
        let rec: TrajectoryRecord = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(rec.eigenvalues.len(), 10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn accepted_steps_keep_pairing_order_and_zeros(
            m_extra in 0usize..3,
            n in 1usize..6,
            seed in any::<u64>(),
        ) {
            let dims = EnsembleDims::new(n + m_extra, n).unwrap();
            let init: Vec<f64> = (0..n).map(|i| 0.5 + i as f64 * 0.4).collect();
            let state = SpectrumState::from_initial(&InitialData::new(init), dims).unwrap();
            let mut it = EigenIntegrator::new(state, SdeConfig::new(1e-3, DriftMode::Brownian), Seed::new(seed)).unwrap();
            for _ in 0..100 {
                it.step().unwrap();
                let e = it.state().eigenvalues();
                prop_assert_eq!(e.len(), dims.size());
                for k in 0..e.len() {
                    prop_assert_eq!(e[k], -e[e.len() - 1 - k]);
                }
                for z in &e[n..n + m_extra] {
                    prop_assert_eq!(*z, 0.0);
                }
                prop_assert!(it.state().positive().windows(2).all(|w| w[1] > w[0]));
            }
        }

        #[test]
        fn noise_mirrors_negated(seed in any::<u64>(), n in 1usize..6) {
            let dims = EnsembleDims::new(n + 2, n).unwrap();
            let noise = NoisePath::<f64>::draw(Seed::new(seed), &mut Seed::new(seed).rng(), n, 0.01);
            let full = noise.mirrored(dims);
            for k in 0..full.len() {
                prop_assert_eq!(full[k], -full[full.len() - 1 - k]);
            }
        }
    }
}
