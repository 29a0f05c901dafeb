//! Reduced reference models: a rigid rotor at frozen shape and the
//! dimer-input trimer model.

mod dimer;
mod rigid;

pub use dimer::*;
pub use rigid::*;

use crate::evolve::EvolveError;
use crate::hypergeom::GeomError;
use crate::observe::ObserveError;
use crate::stationary::StationaryError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RefModelError {
    #[error("shape with θ = {theta} is too close to collinear for J_max ≤ {j_cap}")]
    NearSingularShape { theta: f64, j_cap: u32 },
    #[error("population {population:e} in the J = {j_max} block exceeds the truncation tolerance")]
    TruncationOverflow { j_max: u32, population: f64 },
    #[error("dimer ground state vanishes at r = {0}")]
    NodeDivision(f64),
    #[error("invalid input: {0}")]
    BadInput(String),
    #[error(transparent)]
    Geometry(#[from] GeomError),
    #[error(transparent)]
    Stationary(#[from] StationaryError),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error(transparent)]
    Observe(#[from] ObserveError),
}
