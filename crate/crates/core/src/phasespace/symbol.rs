use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::cutoff::CutoffFunction;
use crate::model::field::dot;
use crate::model::lattice::MomentumLattice;
use crate::model::params::ModelParams;
use crate::phasespace::profile::EnvelopeProfile;

/// Phase-space localizer symbol centred at `(x, xi)`:
///
/// `p(y, eta) = A h^{-n/2 + alpha} mu^{-(n+1)/2} chi(|<x-y, xi>| / L_par)
///   chi(|(x-y)_perp| / L_perp) chi(|eta|/4) chi(h^{-alpha} |eta/|eta| - xi|)`
///
/// with `L_par = mu^2 h^{1 - 2 alpha}` and `L_perp = mu h^{1 - alpha}`.
#[derive(Debug, Clone)]
pub struct LocalizerSymbol {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    pub params: ModelParams,
    pub a_norm: f64,
    pub chi: CutoffFunction,
}

/// `psi_j(y) = weight * exp(i <y, xi_j> / h) * w(y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiDescriptor {
    pub weight: f64,
    pub frequency: Vec<f64>,
}

impl PsiDescriptor {
    pub fn is_zero(&self) -> bool {
        self.weight == 0.0
    }

    pub fn eval(&self, symbol: &LocalizerSymbol, y: &[f64]) -> Complex64 {
        if self.weight == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let phase = dot(y, &self.frequency) / symbol.params.h;
        Complex64::from_polar(self.weight * symbol.envelope(y), phase)
    }
}

/// `chi(h^{-alpha} |xi_j/|xi_j| - xi|)`.
pub fn angular_weight(params: &ModelParams, chi: &CutoffFunction, xi: &[f64], xi_j: &[f64]) -> f64 {
    let norm = dot(xi_j, xi_j).sqrt();
    let gap: f64 = xi_j
        .iter()
        .zip(xi)
        .map(|(a, b)| (a / norm - b).powi(2))
        .sum::<f64>()
        .sqrt();
    chi.eval(gap * params.h.powf(-params.alpha))
}

/// Lattice indices inside the angular aperture of `xi`.
pub fn active_set(params: &ModelParams, lattice: &MomentumLattice, xi: &[f64]) -> Vec<usize> {
    let chi = CutoffFunction::default();
    (0..lattice.len())
        .filter(|&j| angular_weight(params, &chi, xi, lattice.point(j)) > 0.0)
        .collect()
}

/// Solves `A^2 h^{1-n+(n-1)(1-alpha)} N^{-1} sum_j chi_j^2 K = 1` for `A`.
pub fn normalization_from_sum(params: &ModelParams, chi_sq_sum: f64, count: usize, k_chi: f64) -> Result<f64> {
    if chi_sq_sum <= 0.0 {
        return Err(Error::EmptyAperture);
    }
    let n = params.n as f64;
    let scale = params.h.powf(1.0 - n + (n - 1.0) * (1.0 - params.alpha));
    Ok((scale * chi_sq_sum / count as f64 * k_chi).powf(-0.5))
}

/// Prefactor `A` making `Tr(A_gram) = 1` for every `mu` and `h`.
pub fn normalization_constant(
    params: &ModelParams,
    lattice: &MomentumLattice,
    xi: &[f64],
    profile: &EnvelopeProfile,
) -> Result<f64> {
    let chi = profile.cutoff();
    let sum: f64 = lattice
        .iter()
        .map(|p| angular_weight(params, &chi, xi, p).powi(2))
        .sum();
    normalization_from_sum(params, sum, lattice.len(), profile.envelope_constant())
}

impl LocalizerSymbol {
    pub fn new(
        params: ModelParams,
        lattice: &MomentumLattice,
        x: Vec<f64>,
        xi: Vec<f64>,
        profile: &EnvelopeProfile,
    ) -> Result<Self> {
        params.validate()?;
        if x.len() != params.n || xi.len() != params.n {
            return Err(Error::InvalidParams("symbol centre dimension mismatch".into()));
        }
        if (dot(&xi, &xi).sqrt() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParams("symbol direction must be a unit vector".into()));
        }
        let a_norm = normalization_constant(&params, lattice, &xi, profile)?;
        Ok(LocalizerSymbol {
            x,
            xi,
            params,
            a_norm,
            chi: profile.cutoff(),
        })
    }

    pub fn prefactor(&self) -> f64 {
        let p = &self.params;
        let n = p.n as f64;
        self.a_norm * p.h.powf(-n / 2.0 + p.alpha) * p.mu.powf(-(n + 1.0) / 2.0)
    }

    /// `L_par = mu^2 h^{1 - 2 alpha}`.
    pub fn longitudinal_scale(&self) -> f64 {
        self.params.mu.powi(2) * self.params.h.powf(1.0 - 2.0 * self.params.alpha)
    }

    /// `L_perp = mu h^{1 - alpha}`.
    pub fn transverse_scale(&self) -> f64 {
        self.params.mu * self.params.h.powf(1.0 - self.params.alpha)
    }

    /// Splits `v` into its component along `xi` and the norm of the rest.
    pub fn split(&self, v: &[f64]) -> (f64, f64) {
        let along = dot(v, &self.xi);
        let rest = (dot(v, v) - along * along).max(0.0).sqrt();
        (along, rest)
    }

    /// Spatial envelope `w(y)`.
    pub fn envelope(&self, y: &[f64]) -> f64 {
        let d: Vec<f64> = self.x.iter().zip(y).map(|(a, b)| a - b).collect();
        let (along, rest) = self.split(&d);
        self.chi.eval(along.abs() / self.longitudinal_scale())
            * self.chi.eval(rest / self.transverse_scale())
    }

    pub fn angular_weight(&self, xi_j: &[f64]) -> f64 {
        angular_weight(&self.params, &self.chi, &self.xi, xi_j)
    }

    /// Full symbol `p(y, eta)`.
    pub fn eval(&self, y: &[f64], eta: &[f64]) -> f64 {
        let norm = dot(eta, eta).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        self.prefactor()
            * self.envelope(y)
            * self.chi.eval(norm / 4.0)
            * self.angular_weight(eta)
    }

    /// Image of the plane wave `exp(i <y, xi_j> / h)` under the localizer.
    /// The left quantization of `w(y) q(eta)` maps it to
    /// `w(y) q(xi_j) exp(i <y, xi_j> / h)` exactly.
    pub fn psi(&self, xi_j: &[f64]) -> PsiDescriptor {
        let norm = dot(xi_j, xi_j).sqrt();
        // chi(|eta|/4) = 1 on the lattice annulus
        debug_assert!(norm <= 4.0);
        PsiDescriptor {
            weight: self.prefactor() * self.chi.eval(norm / 4.0) * self.angular_weight(xi_j),
            frequency: xi_j.to_vec(),
        }
    }
}
