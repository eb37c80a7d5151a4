//! The random plane-wave model: parameters, cutoff, lattice, coefficients
//! and the field itself.

pub mod coeffs;
pub mod cutoff;
pub mod field;
pub mod lattice;
pub mod params;

pub use coeffs::{draw_seed, sample_coefficients, CoefficientVector};
pub use cutoff::{CutoffFunction, CutoffProfile};
pub use field::{PlaneWaveMatrix, RandomWaveField, Raster, Window};
pub use lattice::{build_lattice, MomentumLattice};
pub use params::ModelParams;
