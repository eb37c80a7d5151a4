use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::coeffs::CoefficientVector;
use crate::model::lattice::MomentumLattice;

/// Neumaier-compensated complex accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    re: f64,
    re_err: f64,
    im: f64,
    im_err: f64,
}

#[inline]
fn neumaier(sum: &mut f64, err: &mut f64, x: f64) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *err += (*sum - t) + x;
    } else {
        *err += (x - t) + *sum;
    }
    *sum = t;
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, z: Complex64) {
        neumaier(&mut self.re, &mut self.re_err, z.re);
        neumaier(&mut self.im, &mut self.im_err, z.im);
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re + self.re_err, self.im + self.im_err)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `u(x) = sum_j c_j exp(i <x, xi_j> / h)`.
#[derive(Debug, Clone)]
pub struct RandomWaveField {
    pub lattice: Arc<MomentumLattice>,
    pub coeffs: CoefficientVector,
}

/// Axis-aligned box `[lo_k, hi_k]` in `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Row-major `|u|^2` grid; the last axis varies fastest.
#[derive(Debug, Clone)]
pub struct Raster {
    pub window: Window,
    pub resolution: usize,
    pub values: Vec<f64>,
}

/// Most nodes a raster may hold.
pub const RASTER_BUDGET: u128 = 1 << 26;

impl Raster {
    /// Coordinates of node `index` (row-major).
    pub fn node(&self, mut index: usize) -> Vec<f64> {
        let n = self.window.lo.len();
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let i = index % self.resolution;
            index /= self.resolution;
            x[k] = grid_coord(self.window.lo[k], self.window.hi[k], self.resolution, i);
        }
        x
    }
}

#[inline]
fn grid_coord(lo: f64, hi: f64, res: usize, i: usize) -> f64 {
    lo + (hi - lo) * i as f64 / (res - 1) as f64
}

impl RandomWaveField {
    pub fn new(lattice: Arc<MomentumLattice>, coeffs: CoefficientVector) -> Result<Self> {
        if coeffs.len() != lattice.len() {
            return Err(Error::InvalidParams(format!(
                "{} coefficients for {} momenta",
                coeffs.len(),
                lattice.len()
            )));
        }
        Ok(RandomWaveField { lattice, coeffs })
    }

    pub fn h(&self) -> f64 {
        self.lattice.params().h
    }

    /// Direct compensated summation of the plane-wave series at `x`.
    pub fn eval(&self, x: &[f64]) -> Complex64 {
        let inv_h = 1.0 / self.h();
        let mut acc = CompensatedSum::default();
        for (xi, &c) in self.lattice.iter().zip(&self.coeffs.c) {
            let phase = dot(x, xi) * inv_h;
            let (s, co) = phase.sin_cos();
            acc.add(Complex64::new(c * co, c * s));
        }
        acc.value()
    }

    /// Termwise gradient `sum_j c_j (i xi_j / h) exp(i <x, xi_j> / h)`.
    pub fn gradient(&self, x: &[f64]) -> Vec<Complex64> {
        let n = self.lattice.dim();
        let inv_h = 1.0 / self.h();
        let mut acc = vec![CompensatedSum::default(); n];
        for (xi, &c) in self.lattice.iter().zip(&self.coeffs.c) {
            let phase = dot(x, xi) * inv_h;
            let (s, co) = phase.sin_cos();
            // i * e^{i phase} = -sin + i cos
            let rot = Complex64::new(-c * s, c * co);
            for (a, &xk) in acc.iter_mut().zip(xi) {
                a.add(rot * (xk * inv_h));
            }
        }
        acc.iter().map(CompensatedSum::value).collect()
    }

    /// `|u|^2` on a `resolution^n` grid spanning `window` (nodes include the
    /// box faces).
    pub fn raster(&self, window: &Window, resolution: usize) -> Result<Raster> {
        let n = self.lattice.dim();
        if window.lo.len() != n || window.hi.len() != n {
            return Err(Error::InvalidParams("window dimension mismatch".into()));
        }
        if resolution < 2 {
            return Err(Error::InvalidParams("raster resolution must be >= 2".into()));
        }
        if window.lo.iter().zip(&window.hi).any(|(l, h)| l.is_nan() || h.is_nan() || l >= h) {
            return Err(Error::InvalidParams("empty raster window".into()));
        }
        let far: f64 = window
            .lo
            .iter()
            .zip(&window.hi)
            .map(|(l, h)| l.abs().max(h.abs()).powi(2))
            .sum::<f64>()
            .sqrt();
        if far > 2.0 + 1e-12 {
            return Err(Error::InvalidParams(
                "raster window must lie inside the ball of radius 2".into(),
            ));
        }
        let total = (resolution as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
        if total > RASTER_BUDGET {
            return Err(Error::BudgetExceeded {
                what: "raster",
                requested: total,
                budget: RASTER_BUDGET,
            });
        }
        let values = if n == 2 {
            self.raster_2d(window, resolution)
        } else {
            let probe = Raster {
                window: window.clone(),
                resolution,
                values: Vec::new(),
            };
            (0..total as usize)
                .into_par_iter()
                .map(|i| self.eval(&probe.node(i)).norm_sqr())
                .collect()
        };
        Ok(Raster {
            window: window.clone(),
            resolution,
            values,
        })
    }

    /// Separable evaluation: `u[a, b] = sum_j (c_j e^{i x_a xi_j1 / h}) e^{i y_b xi_j2 / h}`.
    fn raster_2d(&self, window: &Window, res: usize) -> Vec<f64> {
        let inv_h = 1.0 / self.h();
        let count = self.lattice.len();
        let axis = |k: usize, weighted: bool| -> PlaneWaveMatrix {
            let mut re = DMatrix::zeros(res, count);
            let mut im = DMatrix::zeros(res, count);
            for (j, xi) in self.lattice.iter().enumerate() {
                let w = if weighted { self.coeffs.c[j] } else { 1.0 };
                for a in 0..res {
                    let x = grid_coord(window.lo[k], window.hi[k], res, a);
                    let (s, c) = (x * xi[k] * inv_h).sin_cos();
                    re[(a, j)] = w * c;
                    im[(a, j)] = w * s;
                }
            }
            PlaneWaveMatrix { re, im }
        };
        let rows = axis(0, true);
        let cols = axis(1, false);
        let re = &rows.re * cols.re.transpose() - &rows.im * cols.im.transpose();
        let im = &rows.re * cols.im.transpose() + &rows.im * cols.re.transpose();
        let mut out = Vec::with_capacity(res * res);
        for a in 0..res {
            for b in 0..res {
                out.push(re[(a, b)].powi(2) + im[(a, b)].powi(2));
            }
        }
        out
    }
}

/// Dense `exp(i <p, xi_j> / h)` over a point set, split into real and
/// imaginary parts so batched evaluation runs on real GEMM.
#[derive(Debug, Clone)]
pub struct PlaneWaveMatrix {
    pub re: DMatrix<f64>,
    pub im: DMatrix<f64>,
}

impl PlaneWaveMatrix {
    /// Rows are points (flat, `n` coordinates each), columns momenta.
    pub fn new(points: &[f64], lattice: &MomentumLattice) -> Self {
        let n = lattice.dim();
        let rows = points.len() / n;
        let inv_h = 1.0 / lattice.params().h;
        let count = lattice.len();
        let mut re = DMatrix::zeros(rows, count);
        let mut im = DMatrix::zeros(rows, count);
        let cols: Vec<(usize, Vec<(f64, f64)>)> = (0..count)
            .into_par_iter()
            .map(|j| {
                let xi = lattice.point(j);
                let col = (0..rows)
                    .map(|r| (dot(&points[r * n..(r + 1) * n], xi) * inv_h).sin_cos())
                    .collect();
                (j, col)
            })
            .collect();
        for (j, col) in cols {
            for (r, (s, c)) in col.into_iter().enumerate() {
                re[(r, j)] = c;
                im[(r, j)] = s;
            }
        }
        PlaneWaveMatrix { re, im }
    }

    pub fn rows(&self) -> usize {
        self.re.nrows()
    }

    /// Field values for every column of `coeffs` (`N x D`): returns the
    /// real and imaginary `rows x D` blocks.
    pub fn apply(&self, coeffs: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        (&self.re * coeffs, &self.im * coeffs)
    }
}

/// Packs coefficient vectors as the columns of an `N x D` matrix.
pub fn coefficient_matrix(draws: &[CoefficientVector]) -> DMatrix<f64> {
    let count = draws.first().map_or(0, |d| d.len());
    DMatrix::from_fn(count, draws.len(), |j, d| draws[d].c[j])
}
