//! Numerical certificates for nonradial minimizers in cones: spherical
//! domains, Neumann spectra, radial-graph functionals, torsion solves and
//! volume-constrained gradient flows.

pub mod certificates;
pub mod cli;
pub mod error;
pub mod flow;
pub mod graph_functionals;
pub mod linalg;
pub mod report;
pub mod spectral;
pub mod sphere_geom;
pub mod torsion;

pub use error::{Error, Result};
