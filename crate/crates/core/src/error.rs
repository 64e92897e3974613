use thiserror::Error;

use crate::bounds::BoundsError;
use crate::dynamics::DynamicsError;
use crate::montecarlo::McError;
use crate::spectral::SpectralError;
use crate::tower::TowerError;

/// Crate-wide error, one variant per module family.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    MonteCarlo(#[from] McError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Tower(#[from] TowerError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("invalid lattice configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
