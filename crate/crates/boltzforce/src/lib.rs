//! Deterministic Boltzmann-with-force simulator on the periodic torus and
//! a verification harness for its incompressible fluid limit.

pub mod collision;
pub mod equilibria;
pub mod diagnostics;
pub mod error;
pub mod fluid_solver;
pub mod grids;
pub mod harness;
pub mod kinetic_solver;

pub use error::{Error, Result};
