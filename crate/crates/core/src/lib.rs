//! Constraint-energy-minimizing generalized multiscale finite elements for
//! diffusion problems whose coefficient changes sign.

pub mod assembly;
pub mod auxspace;
pub mod cem;
pub mod coeff;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod io;
pub mod linsolve;
pub mod metrics;
pub mod online;

pub use error::{Error, Result};
