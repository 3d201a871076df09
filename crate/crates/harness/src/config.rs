//! Experiment configuration: one TOML document, validated up front.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use covdbm::dbm::DriftMode;
use covdbm::ensembles::EnsembleDims;
use covdbm::shortrange::make_schedule_unchecked;

use crate::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    Freeconv,
    Dbm,
    Locallaw,
    Shortrange,
    Gaps,
    Correlation,
    Full,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Freeconv => "freeconv",
            Pipeline::Dbm => "dbm",
            Pipeline::Locallaw => "locallaw",
            Pipeline::Shortrange => "shortrange",
            Pipeline::Gaps => "gaps",
            Pipeline::Correlation => "correlation",
            Pipeline::Full => "full",
        }
    }

    /// The stages `self` expands to.
    pub fn stages(self) -> Vec<Pipeline> {
        match self {
            Pipeline::Full => vec![
                Pipeline::Freeconv,
                Pipeline::Dbm,
                Pipeline::Locallaw,
                Pipeline::Shortrange,
                Pipeline::Gaps,
                Pipeline::Correlation,
            ],
            p => vec![p],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimsConfig {
    pub m: usize,
    pub n: usize,
}

/// Where the singular values `V` come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSource {
    /// Singular values of an `M × N` Gaussian block drawn from `seed`
    /// (the master seed when absent).
    Gaussian {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// CSV or binary matrix, relative to the config file: a single row or
    /// column holds `V`, an `M × N` matrix is reduced to its singular values.
    File { path: PathBuf },
    Explicit { values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    pub t: f64,
    pub dt: f64,
    pub mode: DriftMode,
    /// Write a trajectory record every this many steps (0: endpoints only).
    pub record_every: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self { t: 0.1, dt: 1e-3, mode: DriftMode::Brownian, record_every: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub omega0: f64,
    pub omega1: f64,
    pub omega_a: f64,
    pub omega_l: f64,
    /// Reject schedules violating the ordering constraints.
    pub enforce: bool,
    /// Steps per `t₁` of the coupled integration.
    pub steps: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { omega0: 0.5, omega1: 0.1, omega_a: 0.2, omega_l: 0.15, enforce: true, steps: 1000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularityConfig {
    pub energy: f64,
    pub q: f64,
    pub big_g: f64,
    pub eta_floor: f64,
}

impl Default for RegularityConfig {
    fn default() -> Self {
        Self { energy: 0.8, q: 0.5, big_g: 1.0, eta_floor: 1e-4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdConfig {
    pub xi: f64,
    pub nu: f64,
    pub phi_exponent: f64,
    /// `N^ε` slack of the short-range bound.
    pub epsilon: f64,
    /// Exponent of the Wigner coupling reference.
    pub delta: f64,
    /// `N^{−1−ε}` reference of the gap comparison.
    pub gap_epsilon: f64,
    /// Smallest `η` of the local-law grid is `N^{−eta_exponent}`.
    pub eta_exponent: f64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self { xi: 1.0, nu: 1.0, phi_exponent: 3.0, epsilon: 0.1, delta: 0.05, gap_epsilon: 0.05, eta_exponent: 0.8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpConfig {
    pub center: f64,
    pub width: f64,
    /// Unit-integral height when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapsConfig {
    pub offsets: Vec<usize>,
    pub bumps: Vec<BumpConfig>,
    pub c_omega: f64,
    /// Largest offset logged by the coupled GOE comparison.
    pub kmax: usize,
}

impl Default for GapsConfig {
    fn default() -> Self {
        Self {
            offsets: vec![1],
            bumps: vec![BumpConfig { center: 1.0, width: 0.8, height: None }],
            c_omega: 0.3,
            kmax: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelationConfig {
    pub c: f64,
    pub e_ref: f64,
    pub bumps: Vec<BumpConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_count: Option<f64>,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        Self { c: 0.2, e_ref: 0.0, bumps: vec![BumpConfig { center: 0.0, width: 1.0, height: None }], min_count: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub pipeline: Pipeline,
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "default_ensemble")]
    pub ensemble_size: usize,
    pub dims: DimsConfig,
    pub initial: InitialSource,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub regularity: RegularityConfig,
    #[serde(default)]
    pub thresholds: ThresholdConfig,
    #[serde(default)]
    pub gaps: GapsConfig,
    #[serde(default)]
    pub correlation: CorrelationConfig,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_ensemble() -> usize {
    1
}

fn invalid(field: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::Validation { field: field.to_string(), message: message.into() }
}

fn positive(field: &str, x: f64) -> Result<(), HarnessError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive and finite, got {x}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))
    }

    /// Parse `path`; relative paths inside resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Parse(e.to_string()))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output)
    }

    pub fn ensemble_dims(&self) -> Result<EnsembleDims, HarnessError> {
        EnsembleDims::new(self.dims.m, self.dims.n).map_err(|e| invalid("dims", e.to_string()))
    }

    /// Check every field against the preconditions of the stages it feeds.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let dims = self.ensemble_dims()?;
        let n = dims.n();
        if self.ensemble_size == 0 {
            return Err(invalid("ensemble_size", "must be at least 1"));
        }
        match &self.initial {
            InitialSource::Explicit { values } => {
                if values.len() != n {
                    return Err(invalid("initial.values", format!("{} values for N = {n}", values.len())));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("initial.values", "values must be finite"));
                }
            }
            InitialSource::File { path } => {
                let p = self.resolve(path);
                if !p.is_file() {
                    return Err(invalid("initial.path", format!("{} is not a file", p.display())));
                }
            }
            InitialSource::Gaussian { .. } => {}
        }
        let stages = self.pipeline.stages();
        let uses = |p: Pipeline| stages.contains(&p);
        if uses(Pipeline::Freeconv) || uses(Pipeline::Dbm) || uses(Pipeline::Locallaw) {
            positive("time.t", self.time.t)?;
            positive("time.dt", self.time.dt)?;
            if self.time.dt > self.time.t {
                return Err(invalid("time.dt", format!("dt = {} exceeds t = {}", self.time.dt, self.time.t)));
            }
        }
        positive("regularity.eta_floor", self.regularity.eta_floor)?;
        if uses(Pipeline::Locallaw) || uses(Pipeline::Shortrange) || uses(Pipeline::Gaps) {
            positive("regularity.big_g", self.regularity.big_g)?;
            if !(self.regularity.q > 0.0 && self.regularity.q < 1.0) {
                return Err(invalid("regularity.q", format!("q = {} must lie in (0, 1)", self.regularity.q)));
            }
            if !self.regularity.energy.is_finite() {
                return Err(invalid("regularity.energy", "must be finite"));
            }
        }
        if uses(Pipeline::Locallaw) {
            for (f, v) in [
                ("thresholds.xi", self.thresholds.xi),
                ("thresholds.nu", self.thresholds.nu),
                ("thresholds.phi_exponent", self.thresholds.phi_exponent),
                ("thresholds.eta_exponent", self.thresholds.eta_exponent),
            ] {
                positive(f, v)?;
            }
            if self.thresholds.eta_exponent > 1.0 {
                return Err(invalid("thresholds.eta_exponent", "η below 1/N is outside the local-law domain"));
            }
        }
        if uses(Pipeline::Shortrange) || uses(Pipeline::Gaps) || uses(Pipeline::Correlation) {
            let s = &self.schedule;
            let p = make_schedule_unchecked(n, s.omega0, s.omega1, s.omega_a, s.omega_l)
                .map_err(|e| invalid("schedule", e.to_string()))?;
            if s.enforce && !p.is_valid() {
                return Err(invalid("schedule", format!("violated: {}", p.violations.join("; "))));
            }
            if s.steps == 0 {
                return Err(invalid("schedule.steps", "must be at least 1"));
            }
            positive("thresholds.epsilon", self.thresholds.epsilon)?;
            positive("thresholds.delta", self.thresholds.delta)?;
            positive("thresholds.gap_epsilon", self.thresholds.gap_epsilon)?;
        }
        if uses(Pipeline::Gaps) {
            let g = &self.gaps;
            if g.offsets.is_empty() || g.offsets.contains(&0) {
                return Err(invalid("gaps.offsets", "offsets must be positive and nonempty"));
            }
            if g.bumps.len() != g.offsets.len() {
                return Err(invalid("gaps.bumps", format!("{} bumps for {} offsets", g.bumps.len(), g.offsets.len())));
            }
            check_bumps("gaps.bumps", &g.bumps)?;
            positive("gaps.c_omega", g.c_omega)?;
            let cap = (n as f64).powf(g.c_omega);
            if let Some(o) = g.offsets.iter().find(|&&o| o as f64 > cap) {
                return Err(invalid("gaps.offsets", format!("offset {o} exceeds N^c_omega = {cap:.3}")));
            }
            if g.kmax == 0 || g.kmax >= n {
                return Err(invalid("gaps.kmax", format!("must lie in 1..{n}")));
            }
        }
        if uses(Pipeline::Correlation) {
            let c = &self.correlation;
            positive("correlation.c", c.c)?;
            if c.c >= 1.0 {
                return Err(invalid("correlation.c", "the window N^c/N must shrink"));
            }
            if c.bumps.is_empty() {
                return Err(invalid("correlation.bumps", "at least one bump"));
            }
            check_bumps("correlation.bumps", &c.bumps)?;
            if !(c.e_ref.abs() < 2.0) {
                return Err(invalid("correlation.e_ref", "must lie inside the semicircle support"));
            }
            if let Some(m) = c.min_count {
                positive("correlation.min_count", m)?;
            }
        }
        Ok(())
    }
}

fn check_bumps(field: &str, bumps: &[BumpConfig]) -> Result<(), HarnessError> {
    for b in bumps {
        positive(&format!("{field}.width"), b.width)?;
        if !b.center.is_finite() || b.height.is_some_and(|h| !h.is_finite()) {
            return Err(invalid(field, "bump parameters must be finite"));
        }
    }
    Ok(())
}
