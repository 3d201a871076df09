//! Registered test functions for gap and correlation statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `∫_{-1}^{1} exp(−1/(1−u²)) du`.
pub const BUMP_MASS: f64 = 0.443_993_816_168_079_3;

/// `sup_u |d/du exp(−1/(1−u²))|`, attained at `u = 3^{−1/4}`.
pub fn bump_slope_sup() -> f64 {
    let v = 1.0 / 3f64.sqrt();
    2.0 * v.sqrt() / ((1.0 - v) * (1.0 - v)) * (-1.0 / (1.0 - v)).exp()
}

/// `h·exp(−1/(1−u²))` with `u = (x − center)/width`, zero for `|u| ≥ 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: f64,
    pub width: f64,
    pub height: f64,
}

impl Bump {
    pub fn new(center: f64, width: f64, height: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite() && center.is_finite() && height.is_finite()) {
            return Err(Error::InvalidArgument(format!("bad bump ({center}, {width}, {height})")));
        }
        Ok(Self { center, width, height })
    }

    /// Unit-integral bump.
    pub fn normalized(center: f64, width: f64) -> Result<Self> {
        Self::new(center, width, 1.0 / (width * BUMP_MASS))
    }

    pub fn eval(&self, x: f64) -> f64 {
        let u = (x - self.center) / self.width;
        if u.abs() >= 1.0 {
            0.0
        } else {
            self.height * (-1.0 / (1.0 - u * u)).exp()
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let u = (x - self.center) / self.width;
        if u.abs() >= 1.0 {
            return 0.0;
        }
        let s = 1.0 - u * u;
        -2.0 * u / (s * s) * self.eval(x) / self.width
    }

    pub fn integral(&self) -> f64 {
        self.height * self.width * BUMP_MASS
    }

    pub fn sup(&self) -> f64 {
        self.height.abs() * (-1f64).exp()
    }

    pub fn slope_sup(&self) -> f64 {
        self.height.abs() * bump_slope_sup() / self.width
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - self.width, self.center + self.width)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservableForm {
    Constant { value: f64 },
    /// `O(x) = x_k`; not compactly supported, used for mean gaps.
    Coordinate { index: usize },
    ProductBump { bumps: Vec<Bump> },
}

/// Test function together with its index offsets `i₁ < … < i_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapObservable {
    pub form: ObservableForm,
    pub offsets: Vec<usize>,
}

impl GapObservable {
    pub fn new(form: ObservableForm, offsets: Vec<usize>) -> Result<Self> {
        if offsets.is_empty() || offsets.contains(&0) {
            return Err(Error::InvalidArgument("offsets must be positive and nonempty".into()));
        }
        let n = offsets.len();
        match &form {
            ObservableForm::Coordinate { index } if *index >= n => {
                return Err(Error::InvalidArgument(format!("coordinate {index} of a {n}-point observable")));
            }
            ObservableForm::ProductBump { bumps } if bumps.len() != n => {
                return Err(Error::Mismatch(format!("{} bumps for {n} offsets", bumps.len())));
            }
            _ => {}
        }
        Ok(Self { form, offsets })
    }

    pub fn constant(value: f64, offsets: Vec<usize>) -> Result<Self> {
        Self::new(ObservableForm::Constant { value }, offsets)
    }

    pub fn coordinate(index: usize, offsets: Vec<usize>) -> Result<Self> {
        Self::new(ObservableForm::Coordinate { index }, offsets)
    }

    pub fn product_bump(bumps: Vec<Bump>, offsets: Vec<usize>) -> Result<Self> {
        Self::new(ObservableForm::ProductBump { bumps }, offsets)
    }

    pub fn arity(&self) -> usize {
        self.offsets.len()
    }

    pub fn max_offset(&self) -> usize {
        self.offsets.iter().copied().max().unwrap_or(0)
    }

    /// Offsets within `N^{c_ω}`.
    pub fn check_offsets(&self, n: usize, c_omega: f64) -> Result<()> {
        let cap = (n as f64).powf(c_omega);
        match self.offsets.iter().find(|&&o| o as f64 > cap) {
            Some(o) => Err(Error::InvalidArgument(format!("offset {o} exceeds N^c = {cap:.3}"))),
            None => Ok(()),
        }
    }

    pub fn is_compact(&self) -> bool {
        matches!(self.form, ObservableForm::ProductBump { .. })
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.arity() {
            return Err(Error::Mismatch(format!("{} arguments for a {}-point observable", x.len(), self.arity())));
        }
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("observable evaluated at {v}")));
        }
        Ok(match &self.form {
            ObservableForm::Constant { value } => *value,
            ObservableForm::Coordinate { index } => x[*index],
            ObservableForm::ProductBump { bumps } => bumps.iter().zip(x).map(|(b, &xi)| b.eval(xi)).product(),
        })
    }

    /// `sup|O| + Σ_k sup|∂_k O|`; infinite for the coordinate form.
    pub fn c1_norm(&self) -> f64 {
        match &self.form {
            ObservableForm::Constant { value } => value.abs(),
            ObservableForm::Coordinate { .. } => f64::INFINITY,
            ObservableForm::ProductBump { bumps } => {
                let sups: Vec<f64> = bumps.iter().map(Bump::sup).collect();
                let total: f64 = sups.iter().product();
                let slopes: f64 = (0..bumps.len())
                    .map(|k| {
                        let others: f64 = sups.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, s)| s).product();
                        others * bumps[k].slope_sup()
                    })
                    .sum();
                total + slopes
            }
        }
    }
}
