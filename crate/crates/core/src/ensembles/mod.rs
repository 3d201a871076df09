//! Matrix models: rectangular Gaussian blocks, GOE matrices, the symmetric
//! linearization `[[0, H], [Hᵀ, 0]]`, and diagonal initial data.

pub mod io;
pub mod tridiagonal;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Seed;
use crate::scalar::{cinv, cplx, Real, C};

pub use tridiagonal::SymTridiagonal;

/// Shape of the data block: `M` rows, `N` columns, `M ≥ N ≥ 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EnsembleDims {
    m: usize,
    n: usize,
}

impl EnsembleDims {
    pub fn new(m: usize, n: usize) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::InvalidDims(format!("M = {m}, N = {n}: both must be at least 1")));
        }
        if m < n {
            return Err(Error::InvalidDims(format!("M = {m} < N = {n}: transpose the data so that M/N ≥ 1")));
        }
        Ok(Self { m, n })
    }

    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Side length `M + N` of the linearization.
    pub fn size(&self) -> usize {
        self.m + self.n
    }

    /// Multiplicity `M − N` of the pinned zero eigenvalue.
    pub fn trivial_count(&self) -> usize {
        self.m - self.n
    }

    pub fn is_square(&self) -> bool {
        self.m == self.n
    }

    /// `α = M/N` as a reduced fraction.
    pub fn alpha_ratio(&self) -> (usize, usize) {
        let g = gcd(self.m, self.n);
        (self.m / g, self.n / g)
    }

    pub fn alpha<T: Real>(&self) -> T {
        T::from_usize_lossy(self.m) / T::from_usize_lossy(self.n)
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// The `M × N` data block `H`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DataBlock<T: Real> {
    dims: EnsembleDims,
    entries: DMatrix<T>,
}

impl<T: Real> DataBlock<T> {
    pub fn from_matrix(entries: DMatrix<T>) -> Result<Self> {
        let dims = EnsembleDims::new(entries.nrows(), entries.ncols())?;
        Ok(Self { dims, entries })
    }

    /// Zero-padded diagonal block with `values` on the main diagonal.
    pub fn diagonal(dims: EnsembleDims, values: &[T]) -> Result<Self> {
        if values.len() != dims.n() {
            return Err(Error::InvalidDims(format!("{} diagonal values for N = {}", values.len(), dims.n())));
        }
        let mut entries = DMatrix::zeros(dims.m(), dims.n());
        for (i, &v) in values.iter().enumerate() {
            entries[(i, i)] = v;
        }
        Ok(Self { dims, entries })
    }

    pub fn zeros(dims: EnsembleDims) -> Self {
        Self { dims, entries: DMatrix::zeros(dims.m(), dims.n()) }
    }

    pub fn dims(&self) -> EnsembleDims {
        self.dims
    }

    pub fn entries(&self) -> &DMatrix<T> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<T> {
        self.entries
    }
}

/// Symmetric `(M+N) × (M+N)` linearization `X = [[0, H], [Hᵀ, 0]]`.
///
/// Only the block is stored; [`LinearizedMatrix::dense`] materializes `X`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LinearizedMatrix<T: Real> {
    block: DataBlock<T>,
}

impl<T: Real> LinearizedMatrix<T> {
    pub fn dims(&self) -> EnsembleDims {
        self.block.dims
    }

    pub fn block(&self) -> &DataBlock<T> {
        &self.block
    }

    pub fn into_block(self) -> DataBlock<T> {
        self.block
    }

    pub fn dense(&self) -> DMatrix<T> {
        let (m, n) = (self.dims().m(), self.dims().n());
        let h = &self.block.entries;
        let mut x = DMatrix::zeros(m + n, m + n);
        x.view_mut((0, m), (m, n)).copy_from(h);
        x.view_mut((m, 0), (n, m)).copy_from(&h.transpose());
        x
    }
}

/// Singular values `V_1 ≥ … ≥ V_N` of the initial data together with the
/// bounds that regularity is checked against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct InitialData<T: Real> {
    pub singular_values: Vec<T>,
    /// Exponent `B_V` in `‖V‖∞ ≤ N^{B_V}`.
    pub spectral_bound: f64,
    /// Floor `ε` with `min |V_i| > ε` required when `M > N`.
    pub zero_floor: T,
}

impl<T: Real> InitialData<T> {
    pub fn new(singular_values: Vec<T>) -> Self {
        Self { singular_values, spectral_bound: 1.0, zero_floor: T::zero() }
    }

    pub fn with_spectral_bound(mut self, b: f64) -> Self {
        self.spectral_bound = b;
        self
    }

    pub fn with_zero_floor(mut self, eps: T) -> Self {
        self.zero_floor = eps;
        self
    }

    pub fn len(&self) -> usize {
        self.singular_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.singular_values.is_empty()
    }

    pub fn norm_inf(&self) -> T {
        self.singular_values.iter().fold(T::zero(), |a, v| a.max(v.abs()))
    }

    /// Diagonal data block `V` of shape `dims`.
    pub fn to_block(&self, dims: EnsembleDims) -> Result<DataBlock<T>> {
        DataBlock::diagonal(dims, &self.singular_values)
    }

    /// Stable 64-bit fingerprint of the values, for run metadata.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.singular_values {
            for b in v.as_f64().to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01B3);
            }
        }
        h
    }
}

/// Energy window and scales on which the initial data is required to be
/// `(g, G)`-regular.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RegularityWindow<T: Real> {
    pub e0: T,
    pub g: T,
    pub big_g: T,
    pub q: T,
    pub c_v: T,
    pub cap_v: T,
}

impl<T: Real> RegularityWindow<T> {
    pub fn validate(&self, dims: EnsembleDims) -> Result<()> {
        let inv_n = T::one() / T::from_usize_lossy(dims.n());
        if !(self.g >= inv_n && self.g <= self.big_g) {
            return Err(Error::InvalidArgument(format!(
                "regularity scales must satisfy 1/N ≤ g ≤ G (g = {}, G = {}, 1/N = {})",
                self.g, self.big_g, inv_n
            )));
        }
        if !(self.q > T::zero() && self.q < T::one()) {
            return Err(Error::InvalidArgument(format!("q = {} must lie in (0, 1)", self.q)));
        }
        if !(self.c_v > T::zero() && self.c_v <= self.cap_v) {
            return Err(Error::InvalidArgument(format!(
                "density bounds must satisfy 0 < c_V ≤ C_V (c_V = {}, C_V = {})",
                self.c_v, self.cap_v
            )));
        }
        Ok(())
    }
}

/// Outcome of a regularity check, including the grid it was evaluated on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub energies: Vec<f64>,
    pub etas: Vec<f64>,
    pub min_im: f64,
    pub max_im: f64,
    pub norm_inf: f64,
    pub norm_limit: f64,
    pub min_abs: f64,
    pub pass: bool,
    pub failures: Vec<String>,
}

/// Gaussian block with i.i.d. `N(0, 1/N)` entries, filled row by row.
pub fn sample_rect_gaussian<T: Real>(dims: EnsembleDims, seed: Seed) -> Result<DataBlock<T>> {
    let mut rng = seed.rng();
    let scale = T::one() / T::from_usize_lossy(dims.n()).sqrt();
    let mut entries = DMatrix::zeros(dims.m(), dims.n());
    for i in 0..dims.m() {
        for j in 0..dims.n() {
            entries[(i, j)] = T::standard_normal(&mut rng) * scale;
        }
    }
    Ok(DataBlock { dims, entries })
}

/// GOE matrix with off-diagonal variance `1/n` and diagonal variance `2/n`,
/// whose spectrum fills `[-2, 2]`.
pub fn sample_goe<T: Real>(n: usize, seed: Seed) -> Result<DMatrix<T>> {
    if n == 0 {
        return Err(Error::InvalidDims("GOE dimension must be at least 1".into()));
    }
    let mut rng = seed.rng();
    let nf = T::from_usize_lossy(n);
    let off = T::one() / nf.sqrt();
    let diag = (T::lit(2.0) / nf).sqrt();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let g = T::standard_normal(&mut rng);
            if i == j {
                a[(i, i)] = g * diag;
            } else {
                a[(i, j)] = g * off;
                a[(j, i)] = g * off;
            }
        }
    }
    Ok(a)
}

pub fn linearize<T: Real>(block: DataBlock<T>) -> LinearizedMatrix<T> {
    LinearizedMatrix { block }
}

/// Singular values of the block, sorted descending (stable for ties).
pub fn singular_values_desc<T: Real>(block: &DataBlock<T>) -> Vec<T> {
    let mut s: Vec<T> = block.entries.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    s
}

pub fn svd_initial_data<T: Real>(block: &DataBlock<T>) -> InitialData<T> {
    InitialData::new(singular_values_desc(block))
}

/// `m_V(z) = (1/N) Σ 1/(V_i − z)`.
pub fn pseudo_stieltjes<T: Real>(init: &InitialData<T>, z: C<T>) -> Result<C<T>> {
    if z.im <= T::zero() {
        return Err(Error::NotUpperHalfPlane(z.im.as_f64()));
    }
    if init.is_empty() {
        return Err(Error::Empty("initial data has no singular values".into()));
    }
    let mut acc = cplx(T::zero(), T::zero());
    for &v in &init.singular_values {
        acc += cinv(cplx(v, T::zero()) - z);
    }
    Ok(acc / T::from_usize_lossy(init.len()))
}

/// Evaluate `Im m_V` on the regularity grid and check every bound.
///
/// The grid is uniform in `E` over the open window `(E0 − G, E0 + G)` with
/// spacing `g/4`, and geometric in `η ∈ [g, 10]` with 16 points per decade.
pub fn check_regularity<T: Real>(
    init: &InitialData<T>,
    window: &RegularityWindow<T>,
    dims: EnsembleDims,
) -> Result<RegularityReport> {
    window.validate(dims)?;
    let e0 = window.e0.as_f64();
    let g = window.g.as_f64();
    let big_g = window.big_g.as_f64();
    let de = g / 4.0;
    let mut energies = Vec::new();
    let mut k = 1usize;
    loop {
        let e = e0 - big_g + k as f64 * de;
        if e >= e0 + big_g {
            break;
        }
        energies.push(e);
        k += 1;
    }
    let mut etas = Vec::new();
    let mut j = 0usize;
    loop {
        let eta = g * 10f64.powf(j as f64 / 16.0);
        if eta >= 10.0 {
            break;
        }
        etas.push(eta);
        j += 1;
    }
    etas.push(10.0);
    if energies.is_empty() {
        return Err(Error::Empty("regularity grid has no energy points".into()));
    }

    let mut min_im = f64::INFINITY;
    let mut max_im = f64::NEG_INFINITY;
    for &eta in &etas {
        for &e in &energies {
            let m = pseudo_stieltjes(init, cplx(T::lit(e), T::lit(eta)))?;
            let im = m.im.as_f64();
            min_im = min_im.min(im);
            max_im = max_im.max(im);
        }
    }

    let mut failures = Vec::new();
    let c_v = window.c_v.as_f64();
    let cap_v = window.cap_v.as_f64();
    if min_im < c_v {
        failures.push(format!("min Im m_V = {min_im:.6} < c_V = {c_v}"));
    }
    if max_im > cap_v {
        failures.push(format!("max Im m_V = {max_im:.6} > C_V = {cap_v}"));
    }
    let norm_inf = init.norm_inf().as_f64();
    let norm_limit = (dims.n() as f64).powf(init.spectral_bound);
    if norm_inf > norm_limit {
        failures.push(format!("spectral bound: ‖V‖∞ = {norm_inf} > N^B_V = {norm_limit}"));
    }
    let min_abs = init.singular_values.iter().fold(f64::INFINITY, |a, v| a.min(v.abs().as_f64()));
    let eps = init.zero_floor.as_f64();
    if dims.m() > dims.n() && !(eps > 0.0 && min_abs > eps) {
        failures.push(format!("zero floor: min |V_i| = {min_abs} must exceed ε = {eps} > 0 when M > N"));
    }
    Ok(RegularityReport {
        energies,
        etas,
        min_im,
        max_im,
        norm_inf,
        norm_limit,
        min_abs,
        pass: failures.is_empty(),
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sym_eigs(x: &DMatrix<f64>) -> Vec<f64> {
        let mut e: Vec<f64> = x.clone().symmetric_eigenvalues().iter().copied().collect();
        e.sort_by(f64::total_cmp);
        e
    }

    #[test]
    fn dims_validation() {
        assert!(EnsembleDims::new(0, 1).is_err());
        assert!(EnsembleDims::new(1, 0).is_err());
        assert!(EnsembleDims::new(2, 3).is_err());
        let d = EnsembleDims::new(6, 4).unwrap();
        assert_eq!(d.alpha_ratio(), (3, 2));
        assert_eq!(d.alpha::<f64>(), 1.5);
        assert_eq!(d.trivial_count(), 2);
    }

    #[test]
    fn rect_gaussian_unit_variance_single_entry() {
        let dims = EnsembleDims::new(1, 1).unwrap();
        let draws: Vec<f64> = (0..100_000u64)
            .map(|s| sample_rect_gaussian::<f64>(dims, Seed::with_stream(11, s)).unwrap().entries()[(0, 0)])
            .collect();
        let est = crate::stats::Estimate::from_samples(&draws);
        assert!(est.mean.abs() < 3.0 * est.stderr + 1e-12);
        let var = draws.iter().map(|x| x * x).sum::<f64>() / draws.len() as f64;
        // std-error of the sample variance of a Gaussian is sqrt(2/n) σ².
        assert!((var - 1.0).abs() < 3.0 * (2.0f64 / draws.len() as f64).sqrt());
    }

    #[test]
    fn rect_gaussian_variance_is_one_over_n() {
        let dims = EnsembleDims::new(4, 2).unwrap();
        let mut xs = Vec::new();
        for s in 0..12_500u64 {
            let b = sample_rect_gaussian::<f64>(dims, Seed::with_stream(5, s)).unwrap();
            xs.extend(b.entries().iter().copied());
        }
        assert_eq!(xs.len(), 100_000);
        let var = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        assert!((var - 0.5).abs() < 3.0 * 0.5 * (2.0f64 / xs.len() as f64).sqrt(), "{var}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let dims = EnsembleDims::new(5, 3).unwrap();
        let a = sample_rect_gaussian::<f64>(dims, Seed::new(99)).unwrap();
        let b = sample_rect_gaussian::<f64>(dims, Seed::new(99)).unwrap();
        assert_eq!(a, b);
        assert_eq!(sample_goe::<f64>(7, Seed::new(3)).unwrap(), sample_goe::<f64>(7, Seed::new(3)).unwrap());
    }

    #[test]
    fn goe_one_by_one_has_variance_two() {
        let xs: Vec<f64> = (0..100_000u64).map(|s| sample_goe::<f64>(1, Seed::with_stream(2, s)).unwrap()[(0, 0)]).collect();
        let var = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        assert!((var - 2.0).abs() < 3.0 * 2.0 * (2.0f64 / xs.len() as f64).sqrt(), "{var}");
    }

    #[test]
    fn goe_is_exactly_symmetric_and_rejects_zero() {
        let a = sample_goe::<f64>(9, Seed::new(1)).unwrap();
        assert_eq!(a, a.transpose());
        assert!(sample_goe::<f64>(0, Seed::new(1)).is_err());
    }

    #[test]
    fn linearize_one_by_one() {
        let x = linearize(DataBlock::from_matrix(DMatrix::from_row_slice(1, 1, &[1.0])).unwrap());
        assert_eq!(x.dense(), DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        let e = sym_eigs(&x.dense());
        assert_relative_eq!(e[0], -1.0, epsilon = 1e-14);
        assert_relative_eq!(e[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn linearize_three_four_block() {
        let x = linearize(DataBlock::from_matrix(DMatrix::from_row_slice(2, 1, &[3.0, 4.0])).unwrap());
        let e = sym_eigs(&x.dense());
        assert_relative_eq!(e[0], -5.0, epsilon = 1e-12);
        assert!(e[1].abs() < 1e-12);
        assert_relative_eq!(e[2], 5.0, epsilon = 1e-12);
    }

    #[test]
    fn linearize_zero_block() {
        let x = linearize(DataBlock::<f64>::zeros(EnsembleDims::new(3, 2).unwrap()));
        assert!(sym_eigs(&x.dense()).iter().all(|&e| e == 0.0));
    }

    #[test]
    fn svd_initial_data_examples() {
        let b = DataBlock::diagonal(EnsembleDims::square(2).unwrap(), &[1.0, 2.0]).unwrap();
        assert_eq!(svd_initial_data(&b).singular_values, vec![2.0, 1.0]);
        let b = DataBlock::from_matrix(DMatrix::from_row_slice(2, 1, &[3.0, 4.0])).unwrap();
        assert_relative_eq!(svd_initial_data(&b).singular_values[0], 5.0, epsilon = 1e-12);
    }

    #[test]
    fn svd_is_orthogonally_invariant() {
        let dims = EnsembleDims::new(6, 4).unwrap();
        let h = sample_rect_gaussian::<f64>(dims, Seed::new(4)).unwrap();
        let q = sample_rect_gaussian::<f64>(EnsembleDims::square(6).unwrap(), Seed::new(5)).unwrap().into_entries().qr().q();
        let r = sample_rect_gaussian::<f64>(EnsembleDims::square(4).unwrap(), Seed::new(6)).unwrap().into_entries().qr().q();
        let rotated = DataBlock::from_matrix(&q * h.entries() * &r).unwrap();
        let a = svd_initial_data(&h).singular_values;
        let b = svd_initial_data(&rotated).singular_values;
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn pseudo_stieltjes_examples() {
        let ones = InitialData::new(vec![1.0; 5]);
        let m = pseudo_stieltjes(&ones, cplx(0.0, 1.0)).unwrap();
        assert_relative_eq!(m.re, 0.5, epsilon = 1e-15);
        assert_relative_eq!(m.im, 0.5, epsilon = 1e-15);
        let zeros = InitialData::new(vec![0.0; 3]);
        let m = pseudo_stieltjes(&zeros, cplx(0.0, 0.25)).unwrap();
        assert_relative_eq!(m.im, 4.0, epsilon = 1e-14);
        assert_eq!(m.re, 0.0);
        assert!(pseudo_stieltjes(&ones, cplx(0.0, 0.0)).is_err());
    }

    #[test]
    fn regularity_passes_for_gaussian_singular_values() {
        let dims = EnsembleDims::new(400, 200).unwrap();
        let init = svd_initial_data(&sample_rect_gaussian::<f64>(dims, Seed::new(8)).unwrap()).with_zero_floor(0.1);
        // Singular values fill [√2 − 1, √2 + 1]; centre the window in that bulk.
        let window = RegularityWindow { e0: 1.4, g: 1.0 / 200.0, big_g: 0.4, q: 0.5, c_v: 0.05, cap_v: 10.0 };
        let report = check_regularity(&init, &window, dims).unwrap();
        assert!(report.pass, "{:?}", report.failures);
        // Independent evaluation of one grid point from the definition.
        let (e, eta) = (report.energies[3], report.etas[0]);
        let direct: f64 = init.singular_values.iter().map(|v| eta / ((v - e).powi(2) + eta * eta)).sum::<f64>() / 200.0;
        assert!(direct >= report.min_im && direct <= report.max_im);
    }

    #[test]
    fn regularity_fails_on_zero_floor() {
        let dims = EnsembleDims::new(8, 4).unwrap();
        let init = InitialData::new(vec![0.0; 4]).with_zero_floor(0.1);
        let window = RegularityWindow { e0: 0.0, g: 0.25, big_g: 0.5, q: 0.5, c_v: 1e-6, cap_v: 100.0 };
        let report = check_regularity(&init, &window, dims).unwrap();
        assert!(!report.pass);
        assert!(report.failures.iter().any(|f| f.contains("zero floor")));
    }

    #[test]
    fn regularity_fails_on_spectral_bound() {
        let dims = EnsembleDims::square(4).unwrap();
        let big = 4f64.powf(2.0);
        let init = InitialData::new(vec![big, 1.0, 0.5, 0.2]).with_spectral_bound(1.0);
        let window = RegularityWindow { e0: 0.5, g: 0.25, big_g: 0.5, q: 0.5, c_v: 1e-6, cap_v: 100.0 };
        let report = check_regularity(&init, &window, dims).unwrap();
        assert!(report.failures.iter().any(|f| f.contains("spectral bound")));
    }

    #[test]
    fn regularity_rejects_invalid_window() {
        let dims = EnsembleDims::square(4).unwrap();
        let init = InitialData::new(vec![1.0; 4]);
        let bad = RegularityWindow { e0: 0.0, g: 0.5, big_g: 0.25, q: 0.5, c_v: 0.1, cap_v: 1.0 };
        assert!(check_regularity(&init, &bad, dims).is_err());
        let bad_q = RegularityWindow { big_g: 1.0, q: 1.0, ..bad };
        assert!(check_regularity(&init, &bad_q, dims).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let m = pseudo_stieltjes(&InitialData::new(vec![1.0f32; 3]), cplx(0.0f32, 1.0)).unwrap();
        assert!((m.re - 0.5).abs() < 1e-6 && (m.im - 0.5).abs() < 1e-6);
        let b = sample_rect_gaussian::<f32>(EnsembleDims::new(3, 2).unwrap(), Seed::new(1)).unwrap();
        assert_eq!(b.entries().shape(), (3, 2));
    }
}
