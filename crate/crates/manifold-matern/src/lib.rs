//! Gaussian process covariograms built from Laplace-Beltrami spectra on
//! compact manifolds.
//!
//! The crate provides certified spectral kernel evaluation (every value
//! carries a rigorous truncation bound), identifiability and equivalence
//! diagnostics for Matern and squared-exponential families, closed-form
//! variance estimation under a fixed decay parameter, best linear unbiased
//! prediction, and deterministic Monte Carlo drivers for fixed-domain
//! asymptotics experiments on the circle and the 2-sphere.

pub mod equivalence;
pub mod error;
pub mod inference;
pub mod kernel;
pub mod legendre;
pub mod montecarlo;
pub mod rng;
mod series;
pub mod spectrum;
pub mod stats;

pub use error::{Error, Result};
