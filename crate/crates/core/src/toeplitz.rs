//! Multi-level block Toeplitz matrices and frequency-band constraints.
//!
//! A d-level block Toeplitz matrix `T` of side `N_D` is generated by a d-way
//! [`GeneratorTensor`] `B` indexed by offsets `p_i ∈ [-(N_i-1), N_i-1]`:
//! `T[lin(m), lin(n)] = B(m - n)`. Offsets are stored shifted by `N_i - 1` on
//! each axis, row-major with the last axis fastest.
//!
//! A band `[f_L, f_H]` on axis `i` is encoded by the degree-one Hermitian
//! trigonometric polynomial `g(f) = r0 + 2 Re(r1 e^{-i2πf})`, positive inside
//! the band and negative outside. The shifted matrix `T_g` (side
//! `∏ (N_j - 1)`) is PSD for any positive combination of atoms whose axis-`i`
//! frequencies lie inside the band.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg;
use crate::tensor::{wrap_frequency, Dims, SpectralModel};

/// Closed interval `[low, high]` on the unit torus. When `low > high` the band
/// wraps around: `[0, 1) \ (high, low)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyBand {
    low: f64,
    high: f64,
}

impl FrequencyBand {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        for v in [low, high] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!("band edge {v} outside [0, 1)")));
            }
        }
        if low == high {
            return Err(Error::DegenerateBand { low, high });
        }
        Ok(Self { low, high })
    }

    /// `[eps, 1 - eps]`: effectively no prior.
    pub fn full_width(eps: f64) -> Self {
        Self { low: eps, high: 1.0 - eps }
    }

    pub fn low(&self) -> f64 {
        self.low
    }

    pub fn high(&self) -> f64 {
        self.high
    }

    pub fn wraps(&self) -> bool {
        self.low > self.high
    }

    /// Length of the band on the torus.
    pub fn width(&self) -> f64 {
        (self.high - self.low).rem_euclid(1.0)
    }

    pub fn contains(&self, f: f64) -> bool {
        let f = wrap_frequency(f);
        if self.wraps() {
            f >= self.low || f <= self.high
        } else {
            f >= self.low && f <= self.high
        }
    }
}

/// `g(f) = r0 + r1 e^{-i2πf} + conj(r1) e^{i2πf}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPolynomial {
    pub r0: f64,
    pub r1: Complex64,
}

impl BandPolynomial {
    /// Polynomial vanishing at the band edges, positive strictly inside.
    pub fn new(band: &FrequencyBand) -> Self {
        let diff = band.high - band.low;
        let sign = diff.signum();
        let r0 = -2.0 * (PI * diff).cos() * sign;
        let r1 = Complex64::from_polar(1.0, PI * (band.low + band.high)) * sign;
        Self { r0, r1 }
    }

    /// `r_{-1} = conj(r1)`.
    pub fn r_minus1(&self) -> Complex64 {
        self.r1.conj()
    }

    pub fn eval(&self, f: f64) -> f64 {
        self.r0 + 2.0 * (self.r1 * Complex64::from_polar(1.0, -2.0 * PI * f)).re
    }
}

/// d-way tensor of Toeplitz diagonals, offsets `p_i ∈ [-(N_i-1), N_i-1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorTensor {
    dims: Dims,
    shape: Vec<usize>,
    strides: Vec<usize>,
    pub data: DVector<Complex64>,
}

impl GeneratorTensor {
    pub fn zeros(dims: &Dims) -> Self {
        let shape: Vec<usize> = dims.sizes().iter().map(|n| 2 * n - 1).collect();
        let mut strides = vec![1; shape.len()];
        for i in (0..shape.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * shape[i + 1];
        }
        let len = shape.iter().product();
        Self { dims: dims.clone(), shape, strides, data: DVector::zeros(len) }
    }

    /// Wrap raw storage (offset `p` stored at `p + N - 1`, last axis fastest).
    pub fn from_data(dims: &Dims, data: DVector<Complex64>) -> Result<Self> {
        let mut g = Self::zeros(dims);
        if data.len() != g.data.len() {
            return Err(Error::DimensionMismatch(format!(
                "generator for dims {:?} needs {} entries, got {}",
                dims.sizes(),
                g.data.len(),
                data.len()
            )));
        }
        g.data = data;
        Ok(g)
    }

    /// `Σ_ℓ σ_ℓ s̄(f_1ℓ) ⊗ ... ⊗ s̄(f_dℓ)`, i.e. the generator of `A diag(σ) A^H`.
    pub fn from_model(model: &SpectralModel, dims: &Dims) -> Result<Self> {
        let mut g = Self::zeros(dims);
        for (f, &sigma) in model.freqs.iter().zip(&model.gains) {
            if f.len() != dims.ndim() {
                return Err(Error::DimensionMismatch(format!(
                    "frequency has {} components, dims have {}",
                    f.len(),
                    dims.ndim()
                )));
            }
            for lin in 0..g.data.len() {
                let p = g.offset_of(lin);
                let phase: f64 = p.iter().zip(f).map(|(&pi, &fi)| pi as f64 * fi).sum();
                g.data[lin] += sigma * Complex64::from_polar(1.0, 2.0 * PI * phase);
            }
        }
        Ok(g)
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    /// Storage shape `(2N_1 - 1, ..., 2N_d - 1)`.
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Storage index of the zero offset.
    pub fn center_index(&self) -> usize {
        self.dims
            .sizes()
            .iter()
            .zip(&self.strides)
            .map(|(n, s)| (n - 1) * s)
            .sum()
    }

    pub fn index_of(&self, offset: &[isize]) -> Result<usize> {
        if offset.len() != self.dims.ndim() {
            return Err(self.out_of_range(offset));
        }
        let mut lin = 0;
        for ((&p, &n), &s) in offset.iter().zip(self.dims.sizes()).zip(&self.strides) {
            let shifted = p + n as isize - 1;
            if shifted < 0 || shifted >= (2 * n - 1) as isize {
                return Err(self.out_of_range(offset));
            }
            lin += shifted as usize * s;
        }
        Ok(lin)
    }

    fn out_of_range(&self, offset: &[isize]) -> Error {
        Error::OffsetOutOfRange { offset: offset.to_vec(), dims: self.dims.sizes().to_vec() }
    }

    pub fn offset_of(&self, mut lin: usize) -> Vec<isize> {
        let mut p = vec![0isize; self.shape.len()];
        for i in (0..self.shape.len()).rev() {
            p[i] = (lin % self.shape[i]) as isize - (self.dims.sizes()[i] as isize - 1);
            lin /= self.shape[i];
        }
        p
    }

    pub fn get(&self, offset: &[isize]) -> Result<Complex64> {
        Ok(self.data[self.index_of(offset)?])
    }

    pub fn set(&mut self, offset: &[isize], value: Complex64) -> Result<()> {
        let lin = self.index_of(offset)?;
        self.data[lin] = value;
        Ok(())
    }

    /// Largest `|B(-p) - conj(B(p))|`; zero iff `T(B)` is Hermitian.
    pub fn conjugate_symmetry_error(&self) -> f64 {
        let last = self.data.len() - 1;
        // reversing storage order negates every offset
        (0..self.data.len())
            .map(|k| (self.data[last - k] - self.data[k].conj()).norm())
            .fold(0.0, f64::max)
    }
}

/// `β_p = ∏ (N_i - |p_i|)`, the number of entries on diagonal `p`.
pub fn beta_weight(offset: &[isize], dims: &Dims) -> Result<usize> {
    if offset.len() != dims.ndim() {
        return Err(Error::OffsetOutOfRange { offset: offset.to_vec(), dims: dims.sizes().to_vec() });
    }
    let mut beta = 1;
    for (&p, &n) in offset.iter().zip(dims.sizes()) {
        let a = p.unsigned_abs();
        if a >= n {
            return Err(Error::OffsetOutOfRange {
                offset: offset.to_vec(),
                dims: dims.sizes().to_vec(),
            });
        }
        beta *= n - a;
    }
    Ok(beta)
}

/// Generator-storage position of every matrix row multi-index, so that
/// `T[m, n] = B[center + pos[m] - pos[n]]`.
fn row_positions(gen: &GeneratorTensor) -> Vec<usize> {
    let dims = gen.dims();
    (0..dims.total())
        .map(|lin| {
            dims.unravel(lin)
                .iter()
                .zip(gen.strides())
                .map(|(k, s)| k * s)
                .sum()
        })
        .collect()
}

/// `T^d(B)`, the `N_D × N_D` multi-level block Toeplitz matrix.
pub fn build_toeplitz(gen: &GeneratorTensor) -> DMatrix<Complex64> {
    let n = gen.dims().total();
    let pos = row_positions(gen);
    let center = gen.center_index();
    DMatrix::from_fn(n, n, |m, k| gen.data[center + pos[m] - pos[k]])
}

/// `𝕡(M)`: average each block-Toeplitz diagonal of `M`.
pub fn toeplitz_average(m: &DMatrix<Complex64>, dims: &Dims) -> Result<GeneratorTensor> {
    let n = dims.total();
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{}, dims {:?} need {n}x{n}",
            m.nrows(),
            m.ncols(),
            dims.sizes()
        )));
    }
    let mut gen = GeneratorTensor::zeros(dims);
    let pos = row_positions(&gen);
    let center = gen.center_index();
    for col in 0..n {
        for row in 0..n {
            gen.data[center + pos[row] - pos[col]] += m[(row, col)];
        }
    }
    for lin in 0..gen.len() {
        let beta = beta_weight(&gen.offset_of(lin), dims)?;
        gen.data[lin] /= beta as f64;
    }
    Ok(gen)
}

/// Generator of `T_g` on `axis`: `S(p) = r_{-1} B(p + e_i) + r0 B(p) + r1 B(p - e_i)`
/// over the reduced offsets `|p_j| ≤ N_j - 2`.
pub fn band_filter(gen: &GeneratorTensor, poly: &BandPolynomial, axis: usize) -> Result<GeneratorTensor> {
    let dims = gen.dims();
    if axis >= dims.ndim() {
        return Err(Error::InvalidParameter(format!("axis {axis} out of range for d = {}", dims.ndim())));
    }
    let reduced = dims.reduced()?;
    let mut out = GeneratorTensor::zeros(&reduced);
    let map = interior_map(gen, &out);
    let step = gen.strides()[axis];
    let rm1 = poly.r_minus1();
    for (dst, &src) in map.iter().enumerate() {
        out.data[dst] = rm1 * gen.data[src + step] + gen.data[src] * poly.r0 + poly.r1 * gen.data[src - step];
    }
    Ok(out)
}

/// Full-generator storage index of every reduced-generator entry.
pub(crate) fn interior_map(full: &GeneratorTensor, reduced: &GeneratorTensor) -> Vec<usize> {
    (0..reduced.len())
        .map(|lin| {
            let p = reduced.offset_of(lin);
            full.index_of(&p).expect("reduced offsets lie inside the full generator")
        })
        .collect()
}

/// `T_{g}^d(B)` for the band polynomial on `axis`, side `∏ (N_j - 1)`.
pub fn build_tg(gen: &GeneratorTensor, poly: &BandPolynomial, axis: usize) -> Result<DMatrix<Complex64>> {
    Ok(build_toeplitz(&band_filter(gen, poly, axis)?))
}

/// Frobenius-nearest PSD matrix: symmetrize, then clamp negative eigenvalues.
/// A positive definite Hermitian part is returned as is.
pub fn psd_project(h: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    if h.is_square() && linalg::is_finite(h) {
        let sym = linalg::hermitian_part(h);
        if linalg::is_positive_definite(&sym) {
            return Ok(sym);
        }
    }
    let eig = linalg::hermitian_eigen(h)?;
    Ok(linalg::clamp_negative(&eig))
}

/// Outcome of a PSD test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdCertificate {
    pub min_eigenvalue: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// PSD test with tolerance `tol`, or `1e-8 · max(1, ‖H‖_F)` when `None`.
pub fn certify_psd(h: &DMatrix<Complex64>, tol: Option<f64>) -> Result<PsdCertificate> {
    let tolerance = tol.unwrap_or_else(|| 1e-8 * h.norm().max(1.0));
    let min_eigenvalue = if h.is_empty() { 0.0 } else { linalg::min_eigenvalue(h)? };
    Ok(PsdCertificate { min_eigenvalue, tolerance, pass: min_eigenvalue >= -tolerance })
}

/// Certificates for `T^d(B) ⪰ 0` followed by `T_{g_i}^d(B) ⪰ 0` for each axis.
pub fn check_fs_feasible(
    gen: &GeneratorTensor,
    bands: &[FrequencyBand],
    tol: Option<f64>,
) -> Result<Vec<PsdCertificate>> {
    if bands.len() != gen.dims().ndim() {
        return Err(Error::DimensionMismatch(format!(
            "{} bands for a {}-way generator",
            bands.len(),
            gen.dims().ndim()
        )));
    }
    let mut certs = vec![certify_psd(&build_toeplitz(gen), tol)?];
    for (axis, band) in bands.iter().enumerate() {
        let tg = build_tg(gen, &BandPolynomial::new(band), axis)?;
        certs.push(certify_psd(&tg, tol)?);
    }
    Ok(certs)
}
