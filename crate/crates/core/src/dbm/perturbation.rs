//! First- and second-order eigenvalue perturbation of the linearization
//! with respect to its data block.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ensembles::{linearize, singular_values_desc, DataBlock, LinearizedMatrix};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Signed eigenvalue label: `α ∈ {±1, …, ±N}`, where `λ_α` for `α > 0` is
/// the `α`-th smallest nontrivial positive eigenvalue and `λ_{−α} = −λ_α`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Label(pub i64);

impl Label {
    fn check(self, n: usize) -> Result<()> {
        if self.0 == 0 || self.0.unsigned_abs() as usize > n {
            return Err(Error::InvalidArgument(format!("label {} outside ±1..±{n}", self.0)));
        }
        Ok(())
    }

    /// Position in the ascending spectrum of size `M + N`.
    pub fn position(self, m: usize, n: usize) -> usize {
        let a = self.0.unsigned_abs() as usize;
        if self.0 > 0 {
            m + a - 1
        } else {
            n - a
        }
    }
}

fn eig(x: &LinearizedMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let se = x.dense().symmetric_eigen();
    let mut order: Vec<usize> = (0..se.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let vals = order.iter().map(|&k| se.eigenvalues[k]).collect();
    let vecs = DMatrix::from_columns(&order.iter().map(|&k| se.eigenvectors.column(k).into_owned()).collect::<Vec<_>>());
    (vals, vecs)
}

fn to_f64<T: Real>(x: &LinearizedMatrix<T>) -> LinearizedMatrix<f64> {
    let h = x.block().entries().map(|v| v.as_f64());
    linearize(DataBlock::from_matrix(h).expect("valid dims"))
}

/// Smallest distance from `λ_α` to any eigenvalue other than itself, its
/// mirror and the trivial zeros.
fn isolation(vals: &[f64], pos: usize, mirror: usize, m: usize, n: usize) -> f64 {
    let trivial = n..m;
    vals.iter()
        .enumerate()
        .filter(|(k, _)| *k != pos && *k != mirror && !trivial.contains(k))
        .map(|(_, v)| (v - vals[pos]).abs())
        .fold(f64::INFINITY, f64::min)
}

/// `∂λ_α/∂H_ij = 2 v_α(i) v_α(M + j)`: the derivative along the symmetric
/// entry pair `(X_{i,M+j}, X_{M+j,i})`.
pub fn eigenvalue_gradient<T: Real>(x: &LinearizedMatrix<T>, alpha: Label) -> Result<DMatrix<f64>> {
    let (m, n) = (x.dims().m(), x.dims().n());
    alpha.check(n)?;
    let x = to_f64(x);
    let (vals, vecs) = eig(&x);
    let pos = alpha.position(m, n);
    let mirror = Label(-alpha.0).position(m, n);
    let iso = isolation(&vals, pos, mirror, m, n);
    if iso < 1e-10 || vals[pos].abs() < 1e-10 {
        return Err(Error::Degenerate(iso.min(vals[pos].abs())));
    }
    let v = vecs.column(pos);
    Ok(DMatrix::from_fn(m, n, |i, j| 2.0 * v[i] * v[m + j]))
}

/// `d²λ_α/dε²` along `H + εD`:
/// `2 Σ_{β ≠ ±α} (v_βᵀ D_ℓ v_α)² / (λ_α − λ_β)`, the sum running over every
/// other eigenvector including the trivial ones.
pub fn eigenvalue_hessian<T: Real>(x: &LinearizedMatrix<T>, alpha: Label, direction: &DMatrix<f64>) -> Result<f64> {
    let (m, n) = (x.dims().m(), x.dims().n());
    alpha.check(n)?;
    if direction.shape() != (m, n) {
        return Err(Error::InvalidDims(format!("direction must be {m}×{n}")));
    }
    let x = to_f64(x);
    let (vals, vecs) = eig(&x);
    let pos = alpha.position(m, n);
    let mirror = Label(-alpha.0).position(m, n);
    let d = linearize(DataBlock::from_matrix(direction.clone())?).dense();
    let dv: DVector<f64> = &d * vecs.column(pos);
    let mut sum = 0.0;
    for b in 0..vals.len() {
        if b == pos || b == mirror {
            continue;
        }
        let gap = vals[pos] - vals[b];
        let overlap = vecs.column(b).dot(&dv);
        if gap.abs() < 1e-8 {
            if overlap.abs() < 1e-12 {
                continue;
            }
            return Err(Error::Degenerate(gap.abs()));
        }
        sum += overlap * overlap / gap;
    }
    Ok(2.0 * sum)
}

/// Formula against a second-order central difference with step `h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HessianCheck {
    pub formula: f64,
    pub finite_difference: f64,
    pub relative_error: f64,
}

fn labeled_value(h: &DMatrix<f64>, alpha: Label) -> Result<f64> {
    let mut s = singular_values_desc(&DataBlock::from_matrix(h.clone())?);
    s.reverse();
    let v = s[alpha.0.unsigned_abs() as usize - 1];
    Ok(if alpha.0 > 0 { v } else { -v })
}

pub fn eigenvalue_hessian_check<T: Real>(
    x: &LinearizedMatrix<T>,
    alpha: Label,
    direction: &DMatrix<f64>,
    step: f64,
) -> Result<HessianCheck> {
    let formula = eigenvalue_hessian(x, alpha, direction)?;
    let h = to_f64(x).block().entries().clone();
    let plus = labeled_value(&(&h + direction * step), alpha)?;
    let mid = labeled_value(&h, alpha)?;
    let minus = labeled_value(&(&h - direction * step), alpha)?;
    let fd = (plus - 2.0 * mid + minus) / (step * step);
    let relative_error = (formula - fd).abs() / formula.abs().max(fd.abs()).max(1e-12);
    Ok(HessianCheck { formula, finite_difference: fd, relative_error })
}
