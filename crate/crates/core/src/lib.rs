//! Random plane waves at semiclassical scale `h`: X-ray and phase-space
//! statistics, their concentration, and a reproducible experiment runner.

pub mod concentration;
pub mod ensemble;
pub mod error;
pub mod model;
pub mod phasespace;
pub mod quadrature;
pub mod xray;

pub use error::{Error, Result};
pub use model::{
    build_lattice, draw_seed, sample_coefficients, CoefficientVector, CutoffFunction,
    ModelParams, MomentumLattice, RandomWaveField,
};
