//! Tensor bookkeeping, atoms and the observation model.
//!
//! Tensors are stored vectorized with dimension 1 varying slowest and
//! dimension d fastest: the multi-index `(k_1, ..., k_d)` (zero-based) maps to
//! `k_1 * N_2 * ... * N_d + k_2 * N_3 * ... * N_d + ... + k_d`.

use std::f64::consts::TAU;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Sizes `(N_1, ..., N_d)` of a d-way tensor.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Dims {
    sizes: Vec<usize>,
}

impl Dims {
    pub fn new(sizes: impl Into<Vec<usize>>) -> Result<Self> {
        let sizes = sizes.into();
        if sizes.is_empty() {
            return Err(Error::InvalidParameter("dims must have at least one axis".into()));
        }
        if sizes.contains(&0) {
            return Err(Error::InvalidParameter(format!("dims must be positive, got {sizes:?}")));
        }
        Ok(Self { sizes })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn ndim(&self) -> usize {
        self.sizes.len()
    }

    /// `N_D`, the number of tensor entries.
    pub fn total(&self) -> usize {
        self.sizes.iter().product()
    }

    /// `∏ (N_i - 1)`, the side of the shifted Toeplitz matrices.
    pub fn reduced_total(&self) -> usize {
        self.sizes.iter().map(|n| n.saturating_sub(1)).product()
    }

    /// Dims with every axis shortened by one; fails if any `N_i < 2`.
    pub fn reduced(&self) -> Result<Dims> {
        if self.sizes.iter().any(|&n| n < 2) {
            return Err(Error::InvalidParameter(format!(
                "frequency-selective constraints need every N_i >= 2, got {:?}",
                self.sizes
            )));
        }
        Dims::new(self.sizes.iter().map(|n| n - 1).collect::<Vec<_>>())
    }

    /// Row-major strides (last axis fastest).
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.ndim()];
        for i in (0..self.ndim().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.sizes[i + 1];
        }
        strides
    }

    /// Linear index of a zero-based multi-index.
    pub fn linear(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.ndim());
        index
            .iter()
            .zip(&self.sizes)
            .fold(0, |acc, (&k, &n)| {
                debug_assert!(k < n);
                acc * n + k
            })
    }

    /// Zero-based multi-index of a linear index.
    pub fn unravel(&self, mut lin: usize) -> Vec<usize> {
        let mut index = vec![0; self.ndim()];
        for (slot, &n) in index.iter_mut().zip(&self.sizes).rev() {
            *slot = lin % n;
            lin /= n;
        }
        index
    }

    /// Iterator over all multi-indices in vectorization order.
    pub fn indices(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.total()).map(move |lin| self.unravel(lin))
    }
}

/// A dense complex tensor stored in vectorized form.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor {
    pub dims: Dims,
    pub data: DVector<Complex64>,
}

impl ComplexTensor {
    pub fn zeros(dims: Dims) -> Self {
        let n = dims.total();
        Self { dims, data: DVector::zeros(n) }
    }

    pub fn from_vec(dims: Dims, data: DVector<Complex64>) -> Result<Self> {
        if data.len() != dims.total() {
            return Err(Error::DimensionMismatch(format!(
                "tensor data has {} entries, dims {:?} need {}",
                data.len(),
                dims.sizes(),
                dims.total()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn get(&self, index: &[usize]) -> Complex64 {
        self.data[self.dims.linear(index)]
    }
}

/// Ground-truth or estimated line spectrum: `r` frequency vectors with gains.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpectralModel {
    pub freqs: Vec<Vec<f64>>,
    pub gains: Vec<Complex64>,
}

impl SpectralModel {
    pub fn new(freqs: Vec<Vec<f64>>, gains: Vec<Complex64>) -> Result<Self> {
        if freqs.len() != gains.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} frequencies but {} gains",
                freqs.len(),
                gains.len()
            )));
        }
        if gains.iter().any(|g| !g.re.is_finite() || !g.im.is_finite()) {
            return Err(Error::InvalidParameter("gains must be finite".into()));
        }
        Ok(Self { freqs, gains })
    }

    pub fn order(&self) -> usize {
        self.freqs.len()
    }
}

/// Observed samples `y = Φ x + n` with diagonal `Φ = diag(vec(P))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub dims: Dims,
    pub y: DVector<Complex64>,
    pub phi: DVector<Complex64>,
}

impl Measurement {
    pub fn new(dims: Dims, y: DVector<Complex64>, phi: DVector<Complex64>) -> Result<Self> {
        let n = dims.total();
        if y.len() != n || phi.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "measurement lengths y={}, phi={} but N_D={n}",
                y.len(),
                phi.len()
            )));
        }
        if phi.iter().any(|p| !p.re.is_finite() || !p.im.is_finite()) {
            return Err(Error::InvalidParameter("observation tensor must be finite".into()));
        }
        Ok(Self { dims, y, phi })
    }

    /// `Φ v` for the diagonal observation operator.
    pub fn apply_phi(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        self.phi.component_mul(v)
    }

    /// `Φ^H v`.
    pub fn apply_phi_adjoint(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        DVector::from_iterator(v.len(), self.phi.iter().zip(v.iter()).map(|(p, x)| p.conj() * x))
    }
}

/// Reduce a frequency to `[0, 1)`.
pub fn wrap_frequency(f: f64) -> f64 {
    let w = f.rem_euclid(1.0);
    // rem_euclid can round up to exactly 1.0 for tiny negative inputs
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// `s(f, N) = [1, e^{i2πf}, ..., e^{i2π(N-1)f}]`.
pub fn steering_vector(f: f64, n: usize) -> DVector<Complex64> {
    let f = wrap_frequency(f);
    DVector::from_iterator(n, (0..n).map(|k| Complex64::from_polar(1.0, TAU * k as f64 * f)))
}

/// Vectorized atom `a(f) = vec(s(f_1, N_1) ⊗ ... ⊗ s(f_d, N_d))`.
pub fn atom(f: &[f64], dims: &Dims) -> Result<DVector<Complex64>> {
    if f.len() != dims.ndim() {
        return Err(Error::DimensionMismatch(format!(
            "frequency has {} components, dims have {}",
            f.len(),
            dims.ndim()
        )));
    }
    let mut out = DVector::from_element(1, Complex64::new(1.0, 0.0));
    for (&fi, &ni) in f.iter().zip(dims.sizes()) {
        out = kron(&out, &steering_vector(fi, ni));
    }
    Ok(out)
}

/// Atom as a tensor.
pub fn atom_tensor(f: &[f64], dims: &Dims) -> Result<ComplexTensor> {
    Ok(ComplexTensor { dims: dims.clone(), data: atom(f, dims)? })
}

/// Kronecker product of two vectors (second factor fastest).
pub fn kron(a: &DVector<Complex64>, b: &DVector<Complex64>) -> DVector<Complex64> {
    let mut out = DVector::zeros(a.len() * b.len());
    for (i, ai) in a.iter().enumerate() {
        for (j, bj) in b.iter().enumerate() {
            out[i * b.len() + j] = ai * bj;
        }
    }
    out
}

/// `X = Σ_ℓ σ_ℓ A(f_ℓ)`.
pub fn synthesize(model: &SpectralModel, dims: &Dims) -> Result<ComplexTensor> {
    let mut x = ComplexTensor::zeros(dims.clone());
    for (f, &g) in model.freqs.iter().zip(&model.gains) {
        x.data += atom(f, dims)? * g;
    }
    Ok(x)
}

/// Apply the observation model `y = vec(P ⊙ X) + n` with circular complex
/// Gaussian noise of per-entry variance `noise_std²`.
pub fn observe(
    x: &ComplexTensor,
    p: &ComplexTensor,
    noise_std: f64,
    seed: u64,
) -> Result<Measurement> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    observe_with_rng(x, p, noise_std, &mut rng)
}

/// As [`observe`], drawing noise from a caller-owned generator.
pub fn observe_with_rng<R: rand::Rng + ?Sized>(
    x: &ComplexTensor,
    p: &ComplexTensor,
    noise_std: f64,
    rng: &mut R,
) -> Result<Measurement> {
    if x.dims != p.dims {
        return Err(Error::DimensionMismatch(format!(
            "signal dims {:?} vs observation dims {:?}",
            x.dims.sizes(),
            p.dims.sizes()
        )));
    }
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(Error::InvalidParameter(format!("noise_std must be >= 0, got {noise_std}")));
    }
    let scale = noise_std / std::f64::consts::SQRT_2;
    let mut y = p.data.component_mul(&x.data);
    if noise_std > 0.0 {
        for v in y.iter_mut() {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            *v += Complex64::new(re * scale, im * scale);
        }
    }
    Measurement::new(x.dims.clone(), y, p.data.clone())
}

/// Binary sampling mask with `ns` ones at uniformly chosen positions.
pub fn random_mask<R: rand::Rng + ?Sized>(dims: &Dims, ns: usize, rng: &mut R) -> Result<ComplexTensor> {
    let n = dims.total();
    if ns == 0 || ns > n {
        return Err(Error::InvalidParameter(format!("mask needs 1..={n} samples, got {ns}")));
    }
    let mut data = DVector::zeros(n);
    for k in rand::seq::index::sample(rng, n, ns) {
        data[k] = Complex64::new(1.0, 0.0);
    }
    ComplexTensor::from_vec(dims.clone(), data)
}

/// All-ones observation tensor.
pub fn full_mask(dims: &Dims) -> ComplexTensor {
    ComplexTensor { dims: dims.clone(), data: DVector::from_element(dims.total(), Complex64::new(1.0, 0.0)) }
}

/// Noise variance for a given SNR with `r` unit-magnitude components.
pub fn snr_to_noise_var(r: usize, snr_db: f64) -> Result<f64> {
    if r == 0 {
        return Err(Error::InvalidParameter("SNR needs at least one component".into()));
    }
    Ok(r as f64 / 10f64.powf(snr_db / 10.0))
}

/// `‖x̂ − x‖₂ / ‖x‖₂`.
pub fn nmse(x_hat: &DVector<Complex64>, x_ref: &DVector<Complex64>) -> Result<f64> {
    if x_hat.len() != x_ref.len() {
        return Err(Error::DimensionMismatch(format!(
            "nmse on vectors of length {} and {}",
            x_hat.len(),
            x_ref.len()
        )));
    }
    let denom = x_ref.norm();
    if denom == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((x_hat - x_ref).norm() / denom)
}
