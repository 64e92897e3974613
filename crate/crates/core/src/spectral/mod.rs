//! Perturbed transfer operators and renewal operators on tower models.
//!
//! [`operators`] assembles `P_t` and `R̂, Â, B̂, Ê`; [`eigen`] extracts and
//! tracks the peripheral eigenvalues; [`renewal`] solves `τ_k(g, t) = 1`
//! and checks the renewal identities; [`lemmas`] measures the local
//! expansion of `λ_t`; [`kernel`] and [`fourier`] handle the smoothing and
//! inversion integrals.

pub mod eigen;
pub mod fourier;
pub mod kernel;
pub mod lemmas;
pub mod operators;
pub mod renewal;

use thiserror::Error;

use crate::quadrature::QuadratureBudget;

pub use eigen::{decompose, leading_spectrum, SpectralDecomposition, SpectralTracker};
pub use fourier::{compute_a_nn, fourier_inversion_law, quadrature_cor_int, smoothed_law, Normalizer};
pub use kernel::SmoothingKernel;
pub use lemmas::{check_key_lemmas, fit_sigma_clt, fit_sigma_spectral, Branch, SigmaFit};
pub use operators::{assemble_p_t, assemble_renewal_operators, characteristic_function, CMatrix, Freq};
pub use renewal::{solve_gk, verify_lambda_g, verify_renewal_identity, RenewalFactorization, DEFAULT_DELTA};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("eigenvalue branches within {gap:e} of each other")]
    EigenvalueCollision { gap: f64 },
    #[error("shifted operator is singular; inverse iteration failed")]
    Singular,
    #[error("Newton iteration for g_k stalled after {iterations} steps (|τ − 1| = {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("Σ = {sigma:?} is not positive definite")]
    NotPositiveDefinite { sigma: [[f64; 2]; 2] },
    #[error("{grid} grid points per axis alias a support of ±{support}")]
    Alias { grid: usize, support: i64 },
    #[error("{0}")]
    Domain(String),
    #[error(transparent)]
    Quadrature(#[from] QuadratureBudget),
}
