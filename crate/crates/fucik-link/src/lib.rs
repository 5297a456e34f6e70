//! Numerical tools around the Dancer-Fucik spectrum of the Dirichlet
//! Laplacian on tensor-product boxes: eigenspace splittings, the jumping
//! functional and its reduction maps, curve tracing, linking-type critical
//! point search for critical-growth energies, and radial concentration
//! estimates.

pub mod cli;
pub mod concentration;
pub mod error;
pub mod fucik;
mod krylov;
pub mod linking;
pub mod operator;
pub mod quadrature;

pub use error::{FucikError, Result};
