//! Spectral-Galerkin discretization of a Kelvin-Voigt damped beam and
//! reduced-order internal-model controllers for output tracking.

pub mod cli;
pub mod closed_loop;
pub mod config;
pub mod error;
pub mod galerkin;
pub mod io;
pub mod matrixeq;
pub mod signals;
pub mod spectral;
pub mod synthesis;

pub use error::{KvError, Result};
