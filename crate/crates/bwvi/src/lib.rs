//! Gaussian variational inference in the Bures-Wasserstein geometry.
//!
//! The crate approximates a target density proportional to exp(-V) by the
//! best Gaussian in KL divergence, following the forward-backward Euler
//! discretization of the Wasserstein gradient flow. Its centerpiece is a
//! control-variate gradient estimator that subtracts a multiple of the
//! Gaussian score from the potential gradient, shrinking estimator variance
//! near the optimum without introducing bias.
//!
//! Module map:
//! - [`linalg`]: dense SPD kernels (Cholesky with a PD gate, symmetric eigen,
//!   matrix square roots).
//! - [`gaussian`]: Gaussian state, seeded sampling, W2/Bures/KL geometry.
//! - [`targets`]: potentials V with gradients and Hessians (Gaussian,
//!   Student-t, logistic regression) plus data generators.
//! - [`estimators`]: plain and control-variate Monte Carlo estimates of the
//!   first-order information used by the optimizers.
//! - [`optimizers`]: forward-backward and fully forward covariance updates,
//!   plus the iteration driver.
//! - [`diagnostics`]: variance reports, coefficient selection, convergence
//!   bound evaluators, Laplace approximation.
//! - [`harness`]: reproducible experiment presets, CSV/JSON artifacts.

pub mod error;
pub mod estimators;
pub mod diagnostics;
pub mod gaussian;
pub mod harness;
pub mod linalg;
pub mod optimizers;
pub mod targets;

pub use error::{Error, Result};
