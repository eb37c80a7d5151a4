//! One-dimensional Fourier profiles of the squared spatial envelope.
//!
//! The Gram entries of localized plane waves factor into a longitudinal
//! profile `Phi(k) = int_R chi^2(|s|) e^{iks} ds` and a transverse profile
//! `Psi(k) = int_{R^{n-1}} chi^2(|z|) e^{i k z_1} dz`. Both are evaluated by
//! composite Gauss–Legendre rules at two refinement levels; disagreement
//! beyond tolerance is reported rather than silently accepted.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::model::cutoff::CutoffFunction;
use crate::quadrature::{bessel_j0, CompositeRule};

/// Relative (to the value at `k = 0`) disagreement allowed between levels.
pub const PROFILE_TOLERANCE: f64 = 1e-6;

const LEVELS: usize = 18;
const BASE_PANELS: usize = 4;
const ORDER: usize = 16;

/// Nodes and `weight * chi^2(node)` of one refinement level.
type Level = Vec<(f64, f64)>;

#[derive(Debug)]
pub struct EnvelopeProfile {
    n: usize,
    chi: CutoffFunction,
    /// Levels on `[1, 2]` (the transition band of chi).
    band: Vec<OnceLock<Level>>,
    /// Levels on `[0, 1]`, used by the radial (n = 3) profile only.
    core: Vec<OnceLock<Level>>,
    phi0: f64,
    psi0: f64,
}

fn panels(level: usize) -> usize {
    BASE_PANELS << level
}

/// Level whose panels carry at most ~4 radians of `cos(k s)` each.
fn level_for(k: f64) -> usize {
    let mut level = 0;
    while level + 2 < LEVELS && (panels(level) as f64) < k / 4.0 {
        level += 1;
    }
    level
}

impl EnvelopeProfile {
    pub fn new(n: usize, chi: CutoffFunction) -> Result<Self> {
        if !(2..=3).contains(&n) {
            return Err(Error::InvalidParams(format!(
                "envelope profiles are implemented for n = 2, 3 (got n = {n})"
            )));
        }
        let mut profile = EnvelopeProfile {
            n,
            chi,
            band: (0..LEVELS).map(|_| OnceLock::new()).collect(),
            core: (0..LEVELS).map(|_| OnceLock::new()).collect(),
            phi0: 0.0,
            psi0: 0.0,
        };
        profile.phi0 = profile.longitudinal(0.0)?;
        profile.psi0 = profile.transverse(0.0)?;
        Ok(profile)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn cutoff(&self) -> CutoffFunction {
        self.chi
    }

    fn level<'a>(&'a self, cache: &'a [OnceLock<Level>], lo: f64, level: usize) -> &'a Level {
        cache[level].get_or_init(|| {
            let rule = CompositeRule::new(lo, lo + 1.0, panels(level), ORDER);
            rule.nodes
                .iter()
                .zip(&rule.weights)
                .map(|(&s, &w)| (s, w * self.chi.eval_sq(s)))
                .collect()
        })
    }

    fn checked(&self, coarse: f64, fine: f64, scale: f64, what: &str, k: f64) -> Result<f64> {
        if (coarse - fine).abs() > PROFILE_TOLERANCE * scale {
            return Err(Error::Quadrature(format!(
                "{what} profile at k = {k}: levels disagree ({coarse} vs {fine})"
            )));
        }
        Ok(fine)
    }

    /// `Phi(k) = 2 int_0^2 cos(k s) chi^2(s) ds`.
    pub fn longitudinal(&self, k: f64) -> Result<f64> {
        let k = k.abs();
        // chi = 1 on [0, 1]: closed form there
        let head = if k < 1e-8 {
            2.0 - k * k / 3.0
        } else {
            2.0 * k.sin() / k
        };
        let level = level_for(k);
        let tail = |lv: usize| -> f64 {
            2.0 * self
                .level(&self.band, 1.0, lv)
                .iter()
                .map(|&(s, w)| w * (k * s).cos())
                .sum::<f64>()
        };
        let scale = if self.phi0 > 0.0 { self.phi0 } else { 2.0 };
        let tail = self.checked(tail(level), tail(level + 1), scale, "longitudinal", k)?;
        Ok(head + tail)
    }

    /// `Psi(k)`: equal to `Phi` for `n = 2`, and `2 pi int_0^2 J_0(k r) chi^2(r) r dr`
    /// for `n = 3`.
    pub fn transverse(&self, k: f64) -> Result<f64> {
        if self.n == 2 {
            return self.longitudinal(k);
        }
        let k = k.abs();
        let level = level_for(k);
        let radial = |lv: usize| -> f64 {
            let part = |cache: &[OnceLock<Level>], lo: f64| -> f64 {
                self.level(cache, lo, lv)
                    .iter()
                    .map(|&(r, w)| w * r * bessel_j0(k * r))
                    .sum::<f64>()
            };
            2.0 * PI * (part(&self.core, 0.0) + part(&self.band, 1.0))
        };
        let scale = if self.psi0 > 0.0 { self.psi0 } else { 2.0 * PI };
        self.checked(radial(level), radial(level + 1), scale, "transverse", k)
    }

    /// `Phi(0)`.
    pub fn longitudinal_mass(&self) -> f64 {
        self.phi0
    }

    /// `Psi(0)`.
    pub fn transverse_mass(&self) -> f64 {
        self.psi0
    }

    /// `int chi^2(|<y, xi>|) chi^2(|y - <y, xi> xi|) dy = Phi(0) Psi(0)`.
    pub fn envelope_constant(&self) -> f64 {
        self.phi0 * self.psi0
    }
}
