use serde::Serialize;

use crate::error::{Error, Result};

/// Quantile levels reported by [`EnsembleStats`].
pub const QUANTILE_LEVELS: [f64; 7] = [0.01, 0.05, 0.25, 0.50, 0.75, 0.95, 0.99];

/// Monte Carlo summary of one statistic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub median: f64,
    /// Values at [`QUANTILE_LEVELS`], linear interpolation between order
    /// statistics.
    pub quantiles: [f64; 7],
    /// `sqrt(variance / count)`.
    pub se: f64,
    pub count: usize,
    pub seeds: Vec<u64>,
}

impl EnsembleStats {
    pub fn from_samples(samples: &[f64], seeds: Vec<u64>) -> Result<Self> {
        let count = samples.len();
        if count == 0 {
            return Err(Error::Degenerate("empty ensemble".into()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("non-finite sample".into()));
        }
        let mean = samples.iter().sum::<f64>() / count as f64;
        let variance = if count > 1 {
            samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64
        } else {
            0.0
        };
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let quantile = |q: f64| -> f64 {
            let pos = q * (count - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        };
        let mut quantiles = [0.0; 7];
        for (slot, &q) in quantiles.iter_mut().zip(QUANTILE_LEVELS.iter()) {
            *slot = quantile(q);
        }
        Ok(EnsembleStats {
            mean,
            variance,
            median: crate::concentration::median(samples),
            quantiles,
            se: (variance / count as f64).sqrt(),
            count,
            seeds,
        })
    }
}

/// Wilson score interval for `k` successes in `n` trials at normal quantile `z`.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    let lo = if k == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if k >= n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;
