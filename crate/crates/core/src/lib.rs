//! Nonlocal finite elements for the integral fractional Laplacian with zero
//! exterior data on an interval: weighted eigenpairs, energy functionals of
//! semilinear problems and the search and classification of their critical
//! points.

pub mod assembly;
pub mod error;
pub mod experiment;
pub mod export;
pub mod mesh;
pub mod oracle;
pub mod quadrature;
pub mod reaction;
pub mod spectral;
pub mod variational;

pub use error::{Error, Result};
