//! Fractal shear-flow construction, renormalized diffusivities and a spectral
//! advection–diffusion solver on the two-dimensional torus.

pub mod analysis;
pub mod cascade;
pub mod cli;
pub mod correctors;
pub mod cutoffs;
pub mod error;
pub mod field;
pub mod jet;
pub mod params;
pub mod quad;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
