use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::lattice::MomentumLattice;

/// I.i.d. real Gaussian coefficients with variance `1/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    pub c: Vec<f64>,
    pub seed: u64,
    pub sigma_sq: f64,
}

impl CoefficientVector {
    /// Explicit coefficients (seed 0), e.g. for hand-built test fields.
    pub fn from_values(c: Vec<f64>) -> Self {
        let sigma_sq = 1.0 / c.len().max(1) as f64;
        CoefficientVector {
            c,
            seed: 0,
            sigma_sq,
        }
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.c
    }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of draw `index` in an ensemble with master seed `master`. Depends
/// only on the pair, so ensembles are independent of scheduling order.
pub fn draw_seed(master: u64, index: u64) -> u64 {
    mix64(mix64(master) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Standard normal vector of length `len` from `seed`.
pub fn standard_normals(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Draws `N` i.i.d. `N(0, 1/N)` coefficients, reproducibly from `seed`.
pub fn sample_coefficients(lattice: &MomentumLattice, seed: u64) -> Result<CoefficientVector> {
    sample_coefficients_len(lattice.len(), seed)
}

pub fn sample_coefficients_len(len: usize, seed: u64) -> Result<CoefficientVector> {
    if len == 0 {
        return Err(Error::EmptyLattice);
    }
    let sigma = (len as f64).sqrt().recip();
    let c = standard_normals(len, seed)
        .into_iter()
        .map(|z| z * sigma)
        .collect();
    Ok(CoefficientVector {
        c,
        seed,
        sigma_sq: 1.0 / len as f64,
    })
}
