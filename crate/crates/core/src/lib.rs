//! Taylor-Hood mixed finite elements for the two-dimensional periodic
//! stochastic incompressible Navier-Stokes equations with multiplicative noise.

pub mod assembly;
pub mod circulant;
pub mod config;
pub mod error;
pub mod experiments;
pub mod helmholtz;
pub mod linsolve;
pub mod mesh;
pub mod noise;
pub mod spaces;
pub mod sparse;
pub mod stepper;

pub use error::{Error, Result};
