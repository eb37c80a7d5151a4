use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::lattice::MomentumLattice;
use crate::model::params::ModelParams;
use crate::phasespace::gram::{build_gram, LocalizerGram, GRAM_BUDGET};
use crate::phasespace::profile::EnvelopeProfile;
use crate::phasespace::symbol::LocalizerSymbol;

/// Eigenvalues clamp to zero above `-NEGATIVE_TOLERANCE * trace`.
pub const NEGATIVE_TOLERANCE: f64 = 1e-9;
/// Largest moment order handled by [`exact_moments`].
pub const MAX_MOMENT: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralData {
    /// Descending, nonnegative.
    pub eigenvalues: Vec<f64>,
    pub trace: f64,
    pub trace_sq: f64,
    pub lambda_max_ratio: f64,
}

impl SpectralData {
    /// Checks and clamps a raw spectrum. `trace` and `trace_sq` are taken
    /// from the matrix itself (diagonal sum and Frobenius norm).
    fn from_raw(mut values: Vec<f64>, trace: f64, trace_sq: f64) -> Result<Self> {
        values.sort_by(|a, b| b.total_cmp(a));
        let min = values.last().copied().unwrap_or(0.0);
        if min < -NEGATIVE_TOLERANCE * trace.abs() {
            return Err(Error::Indefinite {
                min_eigenvalue: min,
                trace,
            });
        }
        for v in values.iter_mut() {
            *v = v.max(0.0);
        }
        let lambda_max_ratio = values.first().copied().unwrap_or(0.0) / trace;
        Ok(SpectralData {
            eigenvalues: values,
            trace,
            trace_sq,
            lambda_max_ratio,
        })
    }

    pub fn from_eigenvalues(values: Vec<f64>) -> Result<Self> {
        let trace = values.iter().sum();
        let trace_sq = values.iter().map(|v| v * v).sum();
        Self::from_raw(values, trace, trace_sq)
    }
}

/// Spectrum and unitary eigenvectors (columns) of a Hermitian matrix.
pub fn hermitian_spectrum(a: &DMatrix<Complex64>) -> Result<(SpectralData, DMatrix<Complex64>)> {
    let trace = a.diagonal().iter().map(|z| z.re).sum();
    let trace_sq = a.iter().map(|z| z.norm_sqr()).sum();
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let vectors = DMatrix::from_fn(a.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    let data = SpectralData::from_raw(eig.eigenvalues.iter().copied().collect(), trace, trace_sq)?;
    Ok((data, vectors))
}

/// Spectrum and orthogonal eigenvectors of a real symmetric matrix.
pub fn real_spectrum(a: &DMatrix<f64>) -> Result<(SpectralData, DMatrix<f64>)> {
    let trace = a.diagonal().sum();
    let trace_sq = a.iter().map(|v| v * v).sum();
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let vectors = DMatrix::from_fn(a.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    let data = SpectralData::from_raw(eig.eigenvalues.iter().copied().collect(), trace, trace_sq)?;
    Ok((data, vectors))
}

/// Spectral data of the Hermitian gram `A`.
pub fn spectral(gram: &LocalizerGram) -> Result<SpectralData> {
    Ok(hermitian_spectrum(&gram.a_matrix())?.0)
}

/// Diagonalized form of `G^2` for real coefficients.
///
/// For real `c` the imaginary (antisymmetric) part of `A` drops out of
/// `c^T A c`, so `G^2 = sum_r lambda_r y_r^2` with `lambda` the spectrum
/// of `Re A` and `y = U^T (sqrt(N) c)` standard normal.
#[derive(Debug, Clone)]
pub struct GramDiagonalization {
    pub spectrum: SpectralData,
    pub vectors: DMatrix<f64>,
    pub count: usize,
    active: Vec<usize>,
}

impl GramDiagonalization {
    pub fn new(gram: &LocalizerGram) -> Result<Self> {
        let re = gram.a_matrix().map(|z| z.re);
        let (spectrum, vectors) = real_spectrum(&re)?;
        Ok(GramDiagonalization {
            spectrum,
            vectors,
            count: gram.count,
            active: gram.active.clone(),
        })
    }

    /// `G^2` through the eigen-route.
    pub fn g_squared(&self, c: &[f64]) -> f64 {
        let scale = (self.count as f64).sqrt();
        let x: Vec<f64> = self.active.iter().map(|&j| scale * c[j]).collect();
        self.spectrum
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(r, lam)| {
                let y: f64 = self.vectors.column(r).iter().zip(&x).map(|(u, v)| u * v).sum();
                lam * y * y
            })
            .sum()
    }
}

/// `ln E[(sum_j lambda_j y_j^2)^M]` for i.i.d. standard normal `y`.
///
/// Cumulants `kappa_r = 2^{r-1} (r-1)! sum lambda^r` feed the recursion
/// `m_M = sum_{k=1}^{M} C(M-1, k-1) kappa_k m_{M-k}`, run on the spectrum
/// divided by its trace so that intermediate values stay in range.
pub fn exact_log_moment(spectrum: &SpectralData, order: usize) -> Result<f64> {
    if order > MAX_MOMENT {
        return Err(Error::InvalidParams(format!(
            "moment order {order} exceeds {MAX_MOMENT}"
        )));
    }
    if order == 0 {
        return Ok(0.0);
    }
    let scale: f64 = spectrum.eigenvalues.iter().sum();
    if scale <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let mut power_sums = vec![0.0; order + 1];
    for &lam in &spectrum.eigenvalues {
        let l = lam / scale;
        let mut p = 1.0;
        for s in power_sums.iter_mut().skip(1) {
            p *= l;
            *s += p;
        }
    }
    // kappa_r = 2^{r-1} (r-1)! p_r
    let mut kappa = vec![0.0; order + 1];
    let mut factor = 1.0;
    for r in 1..=order {
        if r > 1 {
            factor *= 2.0 * (r - 1) as f64;
        }
        kappa[r] = factor * power_sums[r];
    }
    let mut binom = vec![0.0f64; order + 1];
    binom[0] = 1.0;
    let mut m = vec![0.0; order + 1];
    m[0] = 1.0;
    for big in 1..=order {
        // binom[k] = C(big - 1, k)
        if big > 1 {
            for k in (1..big).rev() {
                binom[k] += binom[k - 1];
            }
        }
        m[big] = (1..=big).map(|k| binom[k - 1] * kappa[k] * m[big - k]).sum();
    }
    Ok(m[order].ln() + order as f64 * scale.ln())
}

/// `E[(G^2)^M]`; may overflow to infinity for large orders, in which case
/// [`exact_log_moment`] carries the value.
pub fn exact_moments(spectrum: &SpectralData, order: usize) -> Result<f64> {
    Ok(exact_log_moment(spectrum, order)?.exp())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub h: f64,
    pub beta: f64,
    pub alpha: f64,
    pub mu: f64,
    #[serde(rename = "N_active")]
    pub n_active: usize,
    pub trace: f64,
    pub trace_sq: f64,
    pub lambda_max_ratio: f64,
}

/// Trace, squared trace and top-eigenvalue share of `A` for every centre
/// and every `mu`.
pub fn trace_report(
    params: &ModelParams,
    lattice: &MomentumLattice,
    centers: &[(Vec<f64>, Vec<f64>)],
    mus: &[f64],
    profile: &EnvelopeProfile,
) -> Result<Vec<(TraceRow, SpectralData)>> {
    let mut out = Vec::new();
    for (x, xi) in centers {
        for &mu in mus {
            let p = params.with_mu(mu)?;
            let symbol = LocalizerSymbol::new(p, lattice, x.clone(), xi.clone(), profile)?;
            let gram = build_gram(&symbol, lattice, profile, GRAM_BUDGET)?;
            let s = spectral(&gram)?;
            out.push((
                TraceRow {
                    h: p.h,
                    beta: p.beta,
                    alpha: p.alpha,
                    mu,
                    n_active: gram.len(),
                    trace: s.trace,
                    trace_sq: s.trace_sq,
                    lambda_max_ratio: s.lambda_max_ratio,
                },
                s,
            ));
        }
    }
    Ok(out)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
