use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::lattice::MomentumLattice;
use crate::phasespace::profile::EnvelopeProfile;
use crate::phasespace::symbol::{active_set, LocalizerSymbol};

/// Largest active set assembled by default.
pub const GRAM_BUDGET: usize = 4096;

/// `I_jk = int psi_j conj(psi_k) dy` in closed separable form:
/// `w_j w_k e^{i<x,eta>/h} L_par Phi(L_par eta_par / h) L_perp^{n-1} Psi(L_perp |eta_perp| / h)`.
pub fn psi_inner(
    symbol: &LocalizerSymbol,
    profile: &EnvelopeProfile,
    xi_j: &[f64],
    xi_k: &[f64],
) -> Result<Complex64> {
    let wj = symbol.psi(xi_j).weight;
    let wk = symbol.psi(xi_k).weight;
    if wj == 0.0 || wk == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    Ok(wj * wk * unit_inner(symbol, profile, xi_j, xi_k)?)
}

/// `psi_inner` without the angular and prefactor weights.
fn unit_inner(
    symbol: &LocalizerSymbol,
    profile: &EnvelopeProfile,
    xi_j: &[f64],
    xi_k: &[f64],
) -> Result<Complex64> {
    let h = symbol.params.h;
    let eta: Vec<f64> = xi_j.iter().zip(xi_k).map(|(a, b)| a - b).collect();
    let (along, across) = symbol.split(&eta);
    let lp = symbol.longitudinal_scale();
    let lt = symbol.transverse_scale();
    let base: f64 = symbol.x.iter().zip(&eta).map(|(a, b)| a * b).sum();
    let n = symbol.params.n as i32;
    let mag = lp
        * profile.longitudinal(lp * along / h)?
        * lt.powi(n - 1)
        * profile.transverse(lt * across / h)?;
    Ok(Complex64::from_polar(mag, base / h))
}

/// `(A)_jk = N^{-1} I_jk`.
pub fn gram_entry(
    symbol: &LocalizerSymbol,
    profile: &EnvelopeProfile,
    xi_j: &[f64],
    xi_k: &[f64],
    count: usize,
) -> Result<Complex64> {
    Ok(psi_inner(symbol, profile, xi_j, xi_k)? / count as f64)
}

/// Gram of the localized plane waves on the active set.
#[derive(Debug, Clone)]
pub struct LocalizerGram {
    pub symbol: LocalizerSymbol,
    /// Lattice indices with nonzero angular weight, ascending.
    pub active: Vec<usize>,
    /// `I_jk` on the active set.
    pub psi: DMatrix<Complex64>,
    /// Lattice size `N`.
    pub count: usize,
}

pub fn build_gram(
    symbol: &LocalizerSymbol,
    lattice: &MomentumLattice,
    profile: &EnvelopeProfile,
    budget: usize,
) -> Result<LocalizerGram> {
    // support test first: inactive rows are zero without any quadrature
    let active = active_set(&symbol.params, lattice, &symbol.xi);
    if active.is_empty() {
        return Err(Error::EmptyAperture);
    }
    if active.len() > budget {
        return Err(Error::BudgetExceeded {
            what: "localizer gram",
            requested: active.len() as u128,
            budget: budget as u128,
        });
    }
    for &j in &active {
        let p = lattice.point(j);
        if p.iter().map(|v| v * v).sum::<f64>().sqrt() > 4.0 {
            return Err(Error::InvalidParams(
                "momenta beyond |eta| = 4 are cut by the radial factor".into(),
            ));
        }
    }
    let m = active.len();
    let weights: Vec<f64> = active
        .iter()
        .map(|&j| symbol.psi(lattice.point(j)).weight)
        .collect();
    let rows: Vec<Vec<Complex64>> = (0..m)
        .into_par_iter()
        .map(|a| {
            let xa = lattice.point(active[a]);
            (a..m)
                .map(|b| {
                    let v = unit_inner(symbol, profile, xa, lattice.point(active[b]))?;
                    Ok(weights[a] * weights[b] * v)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut psi = DMatrix::zeros(m, m);
    for (a, row) in rows.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            let b = a + off;
            if a == b {
                psi[(a, a)] = Complex64::new(v.re, 0.0);
            } else {
                psi[(a, b)] = v;
                psi[(b, a)] = v.conj();
            }
        }
    }
    Ok(LocalizerGram {
        symbol: symbol.clone(),
        active,
        psi,
        count: lattice.len(),
    })
}

impl LocalizerGram {
    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    /// `A = I / N` on the active set.
    pub fn a_matrix(&self) -> DMatrix<Complex64> {
        self.psi.map(|z| z / self.count as f64)
    }

    /// Entry of `A` by lattice indices; zero outside the active set.
    pub fn entry(&self, j: usize, k: usize) -> Complex64 {
        match (self.active.binary_search(&j), self.active.binary_search(&k)) {
            (Ok(a), Ok(b)) => self.psi[(a, b)] / self.count as f64,
            _ => Complex64::new(0.0, 0.0),
        }
    }

    /// Coefficients restricted to the active set.
    pub fn restrict(&self, c: &[f64]) -> Vec<f64> {
        self.active.iter().map(|&j| c[j]).collect()
    }

    /// `G^2 = sum_{j,k} c_j c_k I_jk` over the full coefficient vector.
    pub fn g_squared(&self, c: &[f64]) -> f64 {
        let r = self.restrict(c);
        crate::xray::quadratic_form_real(&self.psi, &r).max(0.0)
    }

    pub fn g_statistic(&self, c: &[f64]) -> f64 {
        self.g_squared(c).sqrt()
    }
}
