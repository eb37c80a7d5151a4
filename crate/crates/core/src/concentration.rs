//! Empirical checks of Gaussian concentration: tail curves around the
//! median, the gap between `E[X]` and `phi^{-1}(E[phi(X)])`, and Lipschitz
//! probes over sampled coefficient pairs.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::coeffs::{draw_seed, standard_normals};

/// Smallest sample accepted by [`empirical_median_tails`].
pub const MIN_TAIL_SAMPLES: usize = 1000;
/// Frequency band used for the Gaussian-shape fit.
pub const FIT_BAND: (f64, f64) = (1e-3, 1e-1);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailFit {
    /// `c_hat` in `freq ~ exp(a - c_hat t^2)`.
    pub c_hat: f64,
    pub intercept: f64,
    /// RMS residual of `ln freq` on the fit range.
    pub residual: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailCurve {
    pub median: f64,
    pub count: usize,
    pub thresholds: Vec<f64>,
    /// `#{|X - median| >= t} / count`.
    pub two_sided: Vec<f64>,
    /// `#{X >= median + t} / count`.
    pub upper: Vec<f64>,
    /// `#{X <= median - t} / count`.
    pub lower: Vec<f64>,
    pub fit: Option<TailFit>,
}

impl TailCurve {
    /// Number of two-sided exceedances at threshold index `k`.
    pub fn exceedances(&self, k: usize) -> usize {
        (self.two_sided[k] * self.count as f64).round() as usize
    }
}

/// Midpoint of the two middle order statistics.
pub fn median(samples: &[f64]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len();
    if m % 2 == 1 {
        s[m / 2]
    } else {
        0.5 * (s[m / 2 - 1] + s[m / 2])
    }
}

/// `#{v in sorted : v >= t}`.
fn count_at_least(sorted: &[f64], t: f64) -> usize {
    sorted.len() - sorted.partition_point(|&v| v < t)
}

/// Tail curve on `points` equally spaced thresholds in `[0, max |X - median|]`.
pub fn empirical_median_tails(samples: &[f64], points: usize) -> Result<TailCurve> {
    let count = samples.len();
    if count < MIN_TAIL_SAMPLES {
        return Err(Error::Degenerate(format!(
            "tail curves need at least {MIN_TAIL_SAMPLES} samples, got {count}"
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("non-finite sample".into()));
    }
    let med = median(samples);
    let mut dev: Vec<f64> = samples.iter().map(|v| (v - med).abs()).collect();
    let mut up: Vec<f64> = samples.iter().map(|v| v - med).collect();
    let mut down: Vec<f64> = samples.iter().map(|v| med - v).collect();
    dev.sort_by(f64::total_cmp);
    up.sort_by(f64::total_cmp);
    down.sort_by(f64::total_cmp);
    let span = *dev.last().unwrap();
    if span <= 0.0 {
        return Err(Error::Degenerate("constant samples".into()));
    }
    let points = points.max(2);
    let thresholds: Vec<f64> = (0..points)
        .map(|k| span * k as f64 / (points - 1) as f64)
        .collect();
    let freq = |sorted: &[f64]| -> Vec<f64> {
        thresholds
            .iter()
            .map(|&t| count_at_least(sorted, t) as f64 / count as f64)
            .collect()
    };
    let two_sided = freq(&dev);
    let fit = fit_gaussian_tail(&thresholds, &two_sided);
    Ok(TailCurve {
        median: med,
        count,
        upper: freq(&up),
        lower: freq(&down),
        thresholds,
        two_sided,
        fit,
    })
}

/// Least squares `ln f = a - c t^2` over thresholds with `f` in [`FIT_BAND`].
pub fn fit_gaussian_tail(thresholds: &[f64], freq: &[f64]) -> Option<TailFit> {
    let pts: Vec<(f64, f64)> = thresholds
        .iter()
        .zip(freq)
        .filter(|(_, &f)| f >= FIT_BAND.0 && f <= FIT_BAND.1)
        .map(|(&t, &f)| (t * t, f.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / k)
        .sqrt();
    Some(TailFit {
        c_hat: -slope,
        intercept,
        residual,
        t_min: pts.first().unwrap().0.sqrt(),
        t_max: pts.last().unwrap().0.sqrt(),
        points: pts.len(),
    })
}

/// Admissible power map `phi(t) = sign(t) |t|^p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiSpec {
    pub power: f64,
}

impl PhiSpec {
    pub fn power(p: f64) -> Result<Self> {
        if !(p >= 1.0 && p.is_finite()) {
            return Err(Error::InvalidParams(format!("power {p} must be >= 1")));
        }
        Ok(PhiSpec { power: p })
    }

    pub fn name(&self) -> String {
        format!("tau^{}", self.power)
    }

    /// Growth exponent `q` with `|phi'(t)| <= C |t|^{q-1}`.
    pub fn growth(&self) -> f64 {
        self.power
    }

    pub fn forward(&self, t: f64) -> f64 {
        t.signum() * t.abs().powf(self.power)
    }

    pub fn inverse(&self, v: f64) -> f64 {
        v.signum() * v.abs().powf(1.0 / self.power)
    }

    /// `phi^{-1}(mean phi(X))`, in log space for nonnegative samples.
    pub fn power_mean(&self, samples: &[f64]) -> f64 {
        let m = samples.len() as f64;
        if samples.iter().all(|&v| v >= 0.0) {
            let logs: Vec<f64> = samples
                .iter()
                .filter(|&&v| v > 0.0)
                .map(|v| self.power * v.ln())
                .collect();
            if logs.is_empty() {
                return 0.0;
            }
            let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = top + logs.iter().map(|l| (l - top).exp()).sum::<f64>().ln();
            ((lse - m.ln()) / self.power).exp()
        } else {
            self.inverse(samples.iter().map(|&v| self.forward(v)).sum::<f64>() / m)
        }
    }
}

/// `|mean(X) - phi^{-1}(mean(phi(X)))|`.
pub fn phi_commute_gap(samples: &[f64], phi: &PhiSpec) -> f64 {
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    (mean - phi.power_mean(samples)).abs()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzProbe {
    pub max_ratio: f64,
    pub pairs: usize,
    /// Index of the pair attaining the maximum.
    pub argmax: usize,
}

/// Coefficient pairs `(c, d)` with `c ~ N(0, I/N)` and `d = c + eps z / sqrt(N)`,
/// `eps` log-uniform in `[1e-3, 1]`, so both local slopes and global
/// differences are probed. Columns are pairs.
pub fn probe_pairs(len: usize, pairs: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let sigma = (len as f64).sqrt().recip();
    let mut c = DMatrix::zeros(len, pairs);
    let mut d = DMatrix::zeros(len, pairs);
    for k in 0..pairs {
        let s = draw_seed(seed, k as u64);
        let base = standard_normals(len, s);
        let step = standard_normals(len, s ^ 0x5555_5555_5555_5555);
        let u: f64 = ChaCha8Rng::seed_from_u64(s).random();
        let eps = 10f64.powf(-3.0 * (1.0 - u));
        for j in 0..len {
            c[(j, k)] = sigma * base[j];
            d[(j, k)] = sigma * (base[j] + eps * step[j]);
        }
    }
    (c, d)
}

/// `max |X(c) - X(d)| / |c - d|` over the columns of `c` and `d`, with `eval`
/// mapping a coefficient matrix to one statistic per column.
pub fn lipschitz_probe<F>(eval: F, c: &DMatrix<f64>, d: &DMatrix<f64>) -> LipschitzProbe
where
    F: Fn(&DMatrix<f64>) -> Vec<f64>,
{
    let xc = eval(c);
    let xd = eval(d);
    let mut best = (0.0, 0);
    for k in 0..c.ncols() {
        let dist = (c.column(k) - d.column(k)).norm();
        if dist == 0.0 {
            continue;
        }
        let r = (xc[k] - xd[k]).abs() / dist;
        if r > best.0 {
            best = (r, k);
        }
    }
    LipschitzProbe {
        max_ratio: best.0,
        pairs: c.ncols(),
        argmax: best.1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_tail_exponent() {
        let sigma = 0.3;
        let samples: Vec<f64> = standard_normals(100_000, 9).iter().map(|z| sigma * z).collect();
        let tc = empirical_median_tails(&samples, 400).unwrap();
        let fit = tc.fit.unwrap();
        let ratio = fit.c_hat * 2.0 * sigma * sigma;
        assert!((0.8..=1.2).contains(&ratio), "ratio {ratio}");
        assert!(fit.c_hat > 0.0);
        for w in tc.two_sided.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn constant_and_short_samples_are_rejected() {
        assert!(matches!(
            empirical_median_tails(&vec![1.5; 2000], 10),
            Err(Error::Degenerate(_))
        ));
        assert!(empirical_median_tails(&[0.0, 1.0], 10).is_err());
    }

    #[test]
    fn median_midpoint() {
        assert_eq!(median(&[3.0, 1.0, 2.0, 10.0]), 2.5);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }

    #[test]
    fn phi_round_trip_and_gap() {
        let phi = PhiSpec::power(6.0).unwrap();
        for k in 0..50 {
            let t = -3.0 + 0.13 * k as f64;
            assert!((phi.inverse(phi.forward(t)) - t).abs() < 1e-10);
        }
        assert_eq!(phi.forward(0.0), 0.0);
        assert!(phi_commute_gap(&[1.7; 100], &phi) < 1e-12);
        assert!(PhiSpec::power(0.5).is_err());
    }

    #[test]
    fn power_mean_log_space_matches_direct() {
        let phi = PhiSpec::power(4.0).unwrap();
        let x = [0.5, 1.0, 2.0, 0.0];
        let direct = (x.iter().map(|v: &f64| v.powi(4)).sum::<f64>() / 4.0).powf(0.25);
        assert!((phi.power_mean(&x) - direct).abs() < 1e-14);
    }

    #[test]
    fn linear_functional_probe() {
        let v = [3.0, -4.0];
        let eval = |m: &DMatrix<f64>| -> Vec<f64> {
            (0..m.ncols()).map(|k| v[0] * m[(0, k)] + v[1] * m[(1, k)]).collect()
        };
        let c = DMatrix::from_column_slice(2, 1, &[0.1, 0.2]);
        let d = DMatrix::from_column_slice(2, 1, &[0.1 + 0.3, 0.2 - 0.4]);
        let p = lipschitz_probe(eval, &c, &d);
        assert!((p.max_ratio - 5.0).abs() < 1e-12);
        let (c, d) = probe_pairs(2, 500, 1);
        assert!(lipschitz_probe(eval, &c, &d).max_ratio <= 5.0 + 1e-12);
    }
}
