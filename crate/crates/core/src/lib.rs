//! Sub-critical Gaussian multiplicative chaos (GMC) on the unit interval.
//!
//! The chaos is built from the cone decomposition of a half-plane white noise:
//! the log-correlated field is the sum of independent stationary level fields
//! `phi_0, phi_1, ...`, each with compactly supported covariance. This crate
//! samples those level fields exactly on dyadic grids, forms the approximate
//! chaos densities, computes their Fourier coefficients and the weighted
//! martingale vectors, and provides estimators for Fourier and correlation
//! dimensions.
//!
//! Every numerical module is generic over [`Scalar`] (`f32` or `f64`). The
//! `*64` aliases below fix the scalar to `f64`, which is what the tolerances
//! in the test suites assume.

pub mod chaos;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod rng;
pub mod sampler;
pub mod scalar;
pub mod spectral;

pub use error::{GmcError, Result};
pub use rng::SeedRecord;
pub use scalar::Scalar;

pub use num_complex::Complex;

pub type ChaosDensity64 = chaos::ChaosDensity<f64>;
pub type FieldHierarchy64 = sampler::FieldHierarchy<f64>;
pub type FieldSampler64 = sampler::FieldSampler<f64>;
pub type Gamma64 = chaos::Gamma<f64>;
pub type SpectrumVector64 = spectral::SpectrumVector<f64>;
pub type LocalizedVector64 = spectral::LocalizedVector<f64>;
pub type SeparationReport64 = spectral::SeparationReport<f64>;
pub type SlopeFit64 = estimators::SlopeFit<f64>;
pub type SpectrumMoments64 = estimators::SpectrumMoments<f64>;
pub type ExponentTriple64 = estimators::ExponentTriple<f64>;
pub type Complex64 = Complex<f64>;
