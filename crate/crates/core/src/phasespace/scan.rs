//! `G` over a grid of phase-space centres for many draws at once.
//!
//! Moving the centre from `0` to `x` multiplies `I_jk` by
//! `exp(i <x, xi_j - xi_k> / h)`, so with `I(0) = V Lambda V^*` one gets
//! `G^2(x) = sum_r lambda_r |sum_j c_j e^{i<x, xi_j>/h} V_jr|^2`: a single
//! product of the plane-wave matrix with `diag(c) V` per direction.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::field::dot;
use crate::model::lattice::MomentumLattice;
use crate::model::params::ModelParams;
use crate::phasespace::gram::{build_gram, GRAM_BUDGET};
use crate::phasespace::profile::EnvelopeProfile;
use crate::phasespace::spectral::hermitian_spectrum;
use crate::phasespace::symbol::LocalizerSymbol;
use crate::xray::sphere_directions;

/// Eigenvalues of `I(0)` below this fraction of the largest are dropped.
pub const RANK_CUTOFF: f64 = 1e-10;
const CHUNK: usize = 256;

/// Centres `x in s Z^n` with `|x| <= 1` and directions at spacing `t`.
#[derive(Debug, Clone)]
pub struct PhaseGrid {
    pub n: usize,
    pub x_spacing: f64,
    pub xi_spacing: f64,
    /// Flat, `n` coordinates per centre.
    pub points: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
}

impl PhaseGrid {
    pub fn point_count(&self) -> usize {
        self.points.len() / self.n
    }

    pub fn count(&self) -> usize {
        self.point_count() * self.directions.len()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.n..(i + 1) * self.n]
    }
}

/// Default spacings are `h` in `x` and `h^alpha` in `xi`.
pub fn phase_grid(
    params: &ModelParams,
    x_spacing: Option<f64>,
    xi_spacing: Option<f64>,
    budget: u128,
) -> Result<PhaseGrid> {
    let n = params.n;
    if !(2..=3).contains(&n) {
        return Err(Error::InvalidParams(format!(
            "phase grids are available for n = 2, 3 only (got n = {n})"
        )));
    }
    let s = x_spacing.unwrap_or(params.h);
    let t = xi_spacing.unwrap_or(params.h.powf(params.alpha));
    if !(s > 0.0 && t > 0.0) {
        return Err(Error::InvalidParams("grid spacings must be positive".into()));
    }
    let span = (1.0 / s).floor() as i64;
    let side = (2 * span + 1) as u128;
    let dirs_est = if n == 2 {
        (2.0 * std::f64::consts::PI / t).ceil() as u128
    } else {
        (4.0 * std::f64::consts::PI / (t * t)).ceil() as u128
    };
    let requested = side.saturating_pow(n as u32).saturating_mul(dirs_est);
    // the ball fills at least half of its bounding box for n <= 3
    if requested / 2 > budget {
        return Err(Error::BudgetExceeded {
            what: "phase grid",
            requested,
            budget,
        });
    }
    let mut points = Vec::new();
    let mut idx = vec![-span; n];
    'outer: loop {
        let x: Vec<f64> = idx.iter().map(|&i| i as f64 * s).collect();
        if dot(&x, &x) <= 1.0 + 1e-12 {
            points.extend_from_slice(&x);
        }
        for k in (0..n).rev() {
            idx[k] += 1;
            if idx[k] <= span {
                continue 'outer;
            }
            idx[k] = -span;
        }
        break;
    }
    let directions = sphere_directions(n, t);
    let grid = PhaseGrid {
        n,
        x_spacing: s,
        xi_spacing: t,
        points,
        directions,
    };
    if grid.count() as u128 > budget {
        return Err(Error::BudgetExceeded {
            what: "phase grid",
            requested: grid.count() as u128,
            budget,
        });
    }
    Ok(grid)
}

/// Low-rank factor of `I(0)` for one direction.
#[derive(Debug, Clone)]
pub struct DirectionKernel {
    pub active: Vec<usize>,
    pub lambda: Vec<f64>,
    /// `active x rank`.
    pub v: DMatrix<Complex64>,
}

/// Per-draw summaries over a [`PhaseGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScanSummary {
    /// `max G` over the grid.
    pub sup: Vec<f64>,
    /// Mean of `G^2` over the grid (uniform weights).
    pub mean_sq: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PhaseScanner {
    pub params: ModelParams,
    pub lattice: Arc<MomentumLattice>,
    pub profile: Arc<EnvelopeProfile>,
    pub grid: PhaseGrid,
}

impl PhaseScanner {
    pub fn new(
        params: ModelParams,
        lattice: Arc<MomentumLattice>,
        profile: Arc<EnvelopeProfile>,
        grid: PhaseGrid,
    ) -> Result<Self> {
        if grid.n != params.n {
            return Err(Error::InvalidParams("grid dimension mismatch".into()));
        }
        Ok(PhaseScanner {
            params,
            lattice,
            profile,
            grid,
        })
    }

    pub fn kernel(&self, direction: usize) -> Result<DirectionKernel> {
        let xi = self.grid.directions[direction].clone();
        let symbol = LocalizerSymbol::new(
            self.params,
            &self.lattice,
            vec![0.0; self.params.n],
            xi,
            &self.profile,
        )?;
        let gram = build_gram(&symbol, &self.lattice, &self.profile, GRAM_BUDGET)?;
        let (spec, vectors) = hermitian_spectrum(&gram.psi)?;
        let top = spec.eigenvalues.first().copied().unwrap_or(0.0);
        let rank = spec
            .eigenvalues
            .iter()
            .take_while(|&&l| l > RANK_CUTOFF * top)
            .count()
            .max(1);
        Ok(DirectionKernel {
            active: gram.active,
            lambda: spec.eigenvalues[..rank].to_vec(),
            v: vectors.columns(0, rank).into_owned(),
        })
    }

    /// Sup and mean square of `G` for every column of `coeffs` (`N x D`).
    pub fn scan(&self, coeffs: &DMatrix<f64>) -> Result<ScanSummary> {
        if coeffs.nrows() != self.lattice.len() {
            return Err(Error::InvalidParams("coefficient matrix has wrong height".into()));
        }
        let draws = coeffs.ncols();
        let mut best = vec![0.0f64; draws];
        let mut total = vec![0.0f64; draws];
        for d in 0..self.grid.directions.len() {
            let kernel = self.kernel(d)?;
            let (maxes, sums) = self.scan_direction(&kernel, coeffs);
            for k in 0..draws {
                best[k] = best[k].max(maxes[k]);
                total[k] += sums[k];
            }
        }
        let cells = self.grid.count() as f64;
        Ok(ScanSummary {
            sup: best.into_iter().map(f64::sqrt).collect(),
            mean_sq: total.into_iter().map(|t| t / cells).collect(),
        })
    }

    /// Per-draw `(max G^2, sum G^2)` over the centres for one direction.
    pub fn scan_direction(&self, kernel: &DirectionKernel, coeffs: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
        let draws = coeffs.ncols();
        let rank = kernel.lambda.len();
        let m = kernel.active.len();
        let mut mre = DMatrix::zeros(m, rank * draws);
        let mut mim = DMatrix::zeros(m, rank * draws);
        for d in 0..draws {
            for (a, &j) in kernel.active.iter().enumerate() {
                let c = coeffs[(j, d)];
                for r in 0..rank {
                    let v = kernel.v[(a, r)];
                    mre[(a, d * rank + r)] = c * v.re;
                    mim[(a, d * rank + r)] = c * v.im;
                }
            }
        }
        let h = self.params.h;
        let n = self.params.n;
        let centres = self.grid.point_count();
        let chunks: Vec<(Vec<f64>, Vec<f64>)> = (0..centres.div_ceil(CHUNK))
            .into_par_iter()
            .map(|chunk| {
                let lo = chunk * CHUNK;
                let hi = (lo + CHUNK).min(centres);
                let rows = hi - lo;
                let mut ere = DMatrix::zeros(rows, m);
                let mut eim = DMatrix::zeros(rows, m);
                for (a, &j) in kernel.active.iter().enumerate() {
                    let xi = self.lattice.point(j);
                    for i in 0..rows {
                        let x = &self.grid.points[(lo + i) * n..(lo + i + 1) * n];
                        let (s, c) = (dot(x, xi) / h).sin_cos();
                        ere[(i, a)] = c;
                        eim[(i, a)] = s;
                    }
                }
                let zre = &ere * &mre - &eim * &mim;
                let zim = &ere * &mim + &eim * &mre;
                let mut maxes = vec![0.0f64; draws];
                let mut sums = vec![0.0f64; draws];
                for d in 0..draws {
                    for i in 0..rows {
                        let g2: f64 = (0..rank)
                            .map(|r| {
                                let col = d * rank + r;
                                kernel.lambda[r] * (zre[(i, col)].powi(2) + zim[(i, col)].powi(2))
                            })
                            .sum();
                        maxes[d] = maxes[d].max(g2);
                        sums[d] += g2;
                    }
                }
                (maxes, sums)
            })
            .collect();
        let mut maxes = vec![0.0f64; draws];
        let mut sums = vec![0.0f64; draws];
        for (mx, sm) in chunks {
            for d in 0..draws {
                maxes[d] = maxes[d].max(mx[d]);
                sums[d] += sm[d];
            }
        }
        (maxes, sums)
    }
}
