//! Numerical laboratory for local large deviations of the infinite-horizon
//! periodic Lorentz gas.
//!
//! The crate has two halves. The billiard half ([`geometry`], [`dynamics`],
//! [`montecarlo`]) simulates the collision map of a periodic disk
//! configuration on the unit torus and estimates the law of the lattice
//! displacement `κ_n` by reproducible Monte Carlo. The operator half
//! ([`tower`], [`spectral`]) builds finite Young towers with heavy-tailed
//! integer observables, assembles the perturbed transfer operators and the
//! renewal operators on them, and checks the eigenvalue, modulus and
//! renewal identities exactly. [`bounds`] holds the scalar calculus shared
//! by both: normalizers `a_n`, the bound functions and the slowly varying
//! function machinery.

pub mod bounds;
pub mod dynamics;
pub mod geometry;
pub mod montecarlo;
pub mod quadrature;
pub mod spectral;
pub mod stats;
pub mod tower;

mod error;

pub use error::{Error, Result};

/// A lattice vector of the cover. One-dimensional (tubular) quantities use
/// the first component and keep the second at zero.
pub type Cell = [i64; 2];

/// Complex scalar used by every operator routine.
pub type C64 = num_complex::Complex64;

pub use bounds::{a_n, lld_bound, safe_log, SlowlyVaryingFn};
pub use dynamics::{next_collision, BilliardTable, FlightResult, PhasePoint};
pub use geometry::{DiskScatterer, LatticeConfig};
pub use montecarlo::{DisplacementHistogram, TailCurve};
pub use tower::{GibbsMarkovBase, TowerModel};
