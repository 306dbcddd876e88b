//! Adiabatic geometric phases for general (non-eigenstate) quantum states.
//!
//! The crate drives linear and nonlinear two-level systems around closed
//! parameter loops and extracts the averaged geometric phase `γ` by several
//! independent routes: from the averaged total phase of an evolving
//! ensemble, from the connection of the action-angle family at fixed angle,
//! from Wilson loops of eigenstate families, from a curvature flux through
//! a spherical cap, and from the closed form on fixed-`Z` circles. Hannay
//! angles follow from `γ` by differentiation in the action and directly
//! from angle tracking.

pub mod actionangle;
pub mod dynamics;
pub mod error;
pub mod model;
pub mod phases;
pub mod spectra;

pub use error::{Error, Result};
