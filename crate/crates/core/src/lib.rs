//! Multi-dimensional spectral super-resolution with frequency-interval priors.
//!
//! The crate recovers a low-rank spectral tensor from incomplete or noisy
//! samples by solving frequency-selective atomic-norm semidefinite programs
//! with ADMM, then localizes the frequencies either from the dual polynomial
//! or by MUSIC on the recovered multi-level block Toeplitz matrix.
//!
//! Modules:
//! - [`tensor`]: dimensions, vectorization, steering vectors, atoms, signal
//!   synthesis and the observation model.
//! - [`toeplitz`]: multi-level block Toeplitz construction and its averaging
//!   adjoint, band polynomials, shifted Toeplitz matrices, PSD projection.
//! - [`admm`]: the constrained (noiseless) and regularized (noisy) solvers.
//! - [`localize`]: dual-polynomial surfaces, MUSIC and least-squares gains.

pub mod admm;
pub mod error;
pub mod linalg;
pub mod localize;
pub mod tensor;
pub mod toeplitz;

pub use error::{Error, Result};

pub use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64;
