use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar knobs of the random plane-wave model.
///
/// `h` is the semiclassical parameter, `beta` the width exponent of the
/// momentum annulus `[1 - h^beta, 1 + h^beta]`, `alpha` the angular
/// localization exponent of the phase-space localizer, `mu` its distance
/// from Planck scale and `epsilon` the exponent of the large-`mu` regime
/// `mu = h^-epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub n: usize,
    pub h: f64,
    pub beta: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_mu() -> f64 {
    1.0
}

fn default_epsilon() -> f64 {
    0.3
}

impl ModelParams {
    /// Parameters with `alpha = 0`, `mu = 1`, `epsilon = 0.3`, validated.
    pub fn new(n: usize, h: f64, beta: f64) -> Result<Self> {
        let p = ModelParams {
            n,
            h,
            beta,
            alpha: 0.0,
            mu: 1.0,
            epsilon: default_epsilon(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        self.alpha = alpha;
        self.validate()?;
        Ok(self)
    }

    pub fn with_mu(mut self, mu: f64) -> Result<Self> {
        self.mu = mu;
        self.validate()?;
        Ok(self)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        self.epsilon = epsilon;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.n < 2 {
            return bad(format!("dimension n = {} must be at least 2", self.n));
        }
        if !(self.h > 0.0 && self.h < 1.0) {
            return bad(format!("h = {} must lie in (0, 1)", self.h));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad(format!("beta = {} must lie in [0, 1]", self.beta));
        }
        // alpha <= beta/2 up to rounding in configs such as alpha = 0.5, beta = 1
        if !(self.alpha >= 0.0 && self.alpha <= self.beta / 2.0 + 1e-12) {
            return bad(format!(
                "alpha = {} must lie in [0, beta/2 = {}]",
                self.alpha,
                self.beta / 2.0
            ));
        }
        if !(self.mu >= 1.0 && self.mu.is_finite()) {
            return bad(format!("mu = {} must be at least 1", self.mu));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 0.5) {
            return bad(format!("epsilon = {} must lie in (0, 1/2]", self.epsilon));
        }
        Ok(())
    }

    /// Half-width `h^beta` of the momentum annulus.
    pub fn annulus_half_width(&self) -> f64 {
        self.h.powf(self.beta)
    }

    /// `h^(beta - n)`, the volume scaling of the lattice count.
    pub fn volume_scale(&self) -> f64 {
        self.h.powf(self.beta - self.n as f64)
    }

    /// `h^-epsilon`, the localizer width of the large-`mu` regime.
    pub fn large_mu(&self) -> f64 {
        self.h.powf(-self.epsilon)
    }
}
