use nalgebra::DMatrix;

use super::sde::SpectrumState;
use crate::ensembles::{linearize, sample_rect_gaussian, singular_values_desc, DataBlock, LinearizedMatrix};
use crate::error::{Error, Result};
use crate::rng::Seed;
use crate::scalar::Real;

/// `X(t) = X0 + √t · W_ℓ`, sampled exactly.
pub fn matrix_flow_sample<T: Real>(x0: &LinearizedMatrix<T>, t: T, seed: Seed) -> Result<LinearizedMatrix<T>> {
    if t < T::zero() {
        return Err(Error::InvalidArgument(format!("time must be non-negative, got {t}")));
    }
    let dims = x0.dims();
    if t == T::zero() {
        return Ok(x0.clone());
    }
    let w = sample_rect_gaussian::<T>(dims, seed)?.into_entries();
    let h = x0.block().entries() + w * t.sqrt();
    Ok(linearize(DataBlock::from_matrix(h)?))
}

/// Exact OU transition `H ← e^{−s/2} H + √((1 − e^{−s})/N) G` applied over
/// `substeps` equal pieces of `[0, t]`.
pub fn ou_matrix_flow_sample<T: Real>(
    x0: &LinearizedMatrix<T>,
    t: T,
    seed: Seed,
    substeps: usize,
) -> Result<LinearizedMatrix<T>> {
    if substeps == 0 {
        return Err(Error::InvalidArgument("substeps must be at least 1".into()));
    }
    if t < T::zero() {
        return Err(Error::InvalidArgument(format!("time must be non-negative, got {t}")));
    }
    if t == T::zero() {
        return Ok(x0.clone());
    }
    let dims = x0.dims();
    let s = t / T::from_usize_lossy(substeps);
    let decay = (-s * T::lit(0.5)).exp();
    // Gaussian blocks already carry variance 1/N.
    let noise = (T::one() - (-s).exp()).sqrt();
    let mut h = x0.block().entries().clone();
    for k in 0..substeps {
        let g = sample_rect_gaussian::<T>(dims, seed.substream(k as u64))?.into_entries();
        h = h * decay + g * noise;
    }
    Ok(linearize(DataBlock::from_matrix(h)?))
}

/// Spectrum of `X` from the singular values of its block, so the ± pairing
/// and the trivial zeros are exact.
pub fn spectrum<T: Real>(x: &LinearizedMatrix<T>) -> Result<SpectrumState<T>> {
    let mut s = singular_values_desc(x.block());
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigensolver("non-finite singular value".into()));
    }
    s.reverse();
    SpectrumState::from_positive(x.dims(), T::zero(), s)
}

/// Ascending eigenvalues of the dense linearization.
pub fn dense_spectrum<T: Real>(x: &LinearizedMatrix<T>) -> Vec<T> {
    let mut e: Vec<T> = x.dense().symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    e
}

/// `√N · max |u(i)|` over eigenvectors of `X` and coordinates `i > M`
/// (all coordinates when `M = N`).
///
/// The eigenvectors for `±s_k` are `(u_k, ±v_k)/√2` with `u_k, v_k` the
/// singular vectors of `H`; the trivial eigenvectors vanish on `i > M`.
pub fn delocalization_stat<T: Real>(x: &LinearizedMatrix<T>) -> Result<f64> {
    let dims = x.dims();
    let svd = x.block().entries().clone().svd(dims.is_square(), true);
    let vt: DMatrix<T> = svd.v_t.ok_or_else(|| Error::Eigensolver("SVD returned no right vectors".into()))?;
    let mut max = vt.iter().fold(0.0f64, |a, v| a.max(v.as_f64().abs()));
    if dims.is_square() {
        let u = svd.u.ok_or_else(|| Error::Eigensolver("SVD returned no left vectors".into()))?;
        max = u.iter().fold(max, |a, v| a.max(v.as_f64().abs()));
    }
    Ok((dims.n() as f64).sqrt() * max / 2f64.sqrt())
}
