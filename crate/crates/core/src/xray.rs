//! The X-ray statistic `F(x, xi) = ||u||_{L^2(segment)}`.
//!
//! `F^2` is a quadratic form `c^T B c` in the coefficients with the
//! Hermitian segment Gram `B`, which has a closed form. For ensembles the
//! same integral is evaluated by a composite Gauss–Legendre rule whose node
//! density is tied to `1/h`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::field::{dot, PlaneWaveMatrix, RandomWaveField};
use crate::model::lattice::MomentumLattice;
use crate::model::params::ModelParams;
use crate::quadrature::CompositeRule;

/// Closed ball containment margin for segment endpoints.
pub const CONTAINMENT_MARGIN: f64 = 1e-9;
/// Phase below which the segment integral switches to its Taylor series.
pub const SERIES_THRESHOLD: f64 = 1e-6;
/// Default bound on the number of `(x, xi)` grid points.
pub const DEFAULT_GRID_BUDGET: u128 = 10_000_000;

/// Unit segment `{x + s xi : s in [0, 1]}` inside the unit ball.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    x: Vec<f64>,
    xi: Vec<f64>,
}

impl Segment {
    pub fn new(x: Vec<f64>, xi: Vec<f64>) -> Result<Self> {
        if x.len() != xi.len() || x.len() < 2 {
            return Err(Error::InvalidParams("segment dimension mismatch".into()));
        }
        if x.iter().chain(&xi).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("non-finite segment".into()));
        }
        let norm = dot(&xi, &xi).sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParams(format!(
                "segment direction has norm {norm}, expected 1"
            )));
        }
        let end: Vec<f64> = x.iter().zip(&xi).map(|(a, b)| a + b).collect();
        let limit = 1.0 - CONTAINMENT_MARGIN;
        if dot(&x, &x).sqrt() > limit || dot(&end, &end).sqrt() > limit {
            return Err(Error::InvalidParams(
                "segment must lie inside the unit ball".into(),
            ));
        }
        Ok(Segment { x, xi })
    }

    /// Planar segment from base point and direction angle.
    pub fn planar(x: [f64; 2], angle: f64) -> Result<Self> {
        Segment::new(x.to_vec(), vec![angle.cos(), angle.sin()])
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn point_at(&self, s: f64) -> Vec<f64> {
        self.x.iter().zip(&self.xi).map(|(a, b)| a + s * b).collect()
    }
}

/// `(e^{i phi} - 1) / (i phi)`, i.e. `int_0^1 e^{i s phi} ds`.
#[inline]
pub fn unit_phase_integral(phi: f64) -> Complex64 {
    if phi.abs() < SERIES_THRESHOLD {
        let p2 = phi * phi;
        Complex64::new(1.0 - p2 / 6.0, phi / 2.0 - phi * p2 / 24.0)
    } else {
        let s = phi.sin();
        // (c - 1 + i s) / (i phi) = (s + i (1 - c)) / phi, with 1 - c = 2 sin^2(phi/2)
        let half = (0.5 * phi).sin();
        Complex64::new(s / phi, 2.0 * half * half / phi)
    }
}

/// `B_jl = int_segment exp(i <y, xi_j - xi_l> / h) dl(y)` in closed form.
pub fn xray_gram_entry(segment: &Segment, xi_j: &[f64], xi_l: &[f64], h: f64) -> Complex64 {
    let mut along = 0.0;
    let mut base = 0.0;
    for k in 0..segment.dim() {
        let eta = xi_j[k] - xi_l[k];
        along += segment.xi[k] * eta;
        base += segment.x[k] * eta;
    }
    Complex64::from_polar(1.0, base / h) * unit_phase_integral(along / h)
}

/// Segment Gram matrix over the whole lattice.
#[derive(Debug, Clone)]
pub struct XRayGram {
    pub b: DMatrix<Complex64>,
    pub segment: Segment,
}

impl XRayGram {
    pub fn build(lattice: &MomentumLattice, segment: &Segment) -> Self {
        let h = lattice.params().h;
        let count = lattice.len();
        let rows: Vec<Vec<Complex64>> = (0..count)
            .into_par_iter()
            .map(|j| {
                let xj = lattice.point(j);
                (0..count)
                    .map(|l| {
                        if l == j {
                            Complex64::new(1.0, 0.0)
                        } else {
                            xray_gram_entry(segment, xj, lattice.point(l), h)
                        }
                    })
                    .collect()
            })
            .collect();
        let b = DMatrix::from_fn(count, count, |j, l| rows[j][l]);
        XRayGram {
            b,
            segment: segment.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.b.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.b.nrows() == 0
    }

    /// `c^T B c`, real for real `c`.
    pub fn quadratic_form(&self, c: &[f64]) -> f64 {
        quadratic_form_real(&self.b, c)
    }

    /// Real part of `B`: the form acting on real coefficient vectors.
    pub fn real_part(&self) -> DMatrix<f64> {
        self.b.map(|z| z.re)
    }

    /// `sum |B_jl|^2`.
    pub fn frobenius_sq(&self) -> f64 {
        self.b.iter().map(|z| z.norm_sqr()).sum()
    }
}

pub(crate) fn quadratic_form_real(b: &DMatrix<Complex64>, c: &[f64]) -> f64 {
    let count = c.len();
    (0..count)
        .into_par_iter()
        .map(|j| {
            let row: f64 = (0..count).map(|l| b[(j, l)].re * c[l]).sum();
            c[j] * row
        })
        .sum::<f64>()
}

/// `F = sqrt(c^T B c)` through the exact segment Gram.
pub fn f_statistic(field: &RandomWaveField, segment: &Segment) -> f64 {
    let gram = XRayGram::build(&field.lattice, segment);
    gram.quadratic_form(&field.coeffs.c).max(0.0).sqrt()
}

/// Nodes per unit length: 16 per wavelength `2 pi h` of the field.
pub fn nodes_per_unit_length(h: f64) -> usize {
    (16.0 / (2.0 * PI * h)).ceil() as usize
}

/// Composite 16-point Gauss–Legendre rule on `[0, 1]` at the density
/// `nodes_per_unit_length(h)` (at least `min_panels` panels).
pub fn segment_rule(h: f64, min_panels: usize) -> CompositeRule {
    let panels = nodes_per_unit_length(h).div_ceil(16).max(min_panels);
    CompositeRule::new(0.0, 1.0, panels, 16)
}

/// Quadrature of `int_segment |u|^2` for many coefficient vectors at once.
#[derive(Debug, Clone)]
pub struct SegmentQuadrature {
    pub segment: Segment,
    pub rule: CompositeRule,
    waves: PlaneWaveMatrix,
}

impl SegmentQuadrature {
    pub fn new(lattice: &MomentumLattice, segment: &Segment) -> Self {
        Self::with_rule(lattice, segment, segment_rule(lattice.params().h, 1))
    }

    pub fn with_rule(lattice: &MomentumLattice, segment: &Segment, rule: CompositeRule) -> Self {
        let points: Vec<f64> = rule
            .nodes
            .iter()
            .flat_map(|&s| segment.point_at(s))
            .collect();
        let waves = PlaneWaveMatrix::new(&points, lattice);
        SegmentQuadrature {
            segment: segment.clone(),
            rule,
            waves,
        }
    }

    /// `F^2` for every column of `coeffs` (`N x D`).
    pub fn f_squared_batch(&self, coeffs: &DMatrix<f64>) -> Vec<f64> {
        let (re, im) = self.waves.apply(coeffs);
        (0..coeffs.ncols())
            .map(|d| {
                self.rule
                    .weights
                    .iter()
                    .enumerate()
                    .map(|(k, w)| w * (re[(k, d)].powi(2) + im[(k, d)].powi(2)))
                    .sum()
            })
            .collect()
    }

    pub fn f_squared(&self, c: &[f64]) -> f64 {
        self.f_squared_batch(&DMatrix::from_column_slice(c.len(), 1, c))[0]
    }
}

/// `F^2` by composite Gauss–Legendre quadrature of `|u|^2` along the segment.
pub fn f_squared_quadrature(field: &RandomWaveField, segment: &Segment) -> f64 {
    let rule = segment_rule(field.h(), 1);
    rule.nodes
        .par_iter()
        .zip(rule.weights.par_iter())
        .map(|(&s, &w)| w * field.eval(&segment.point_at(s)).norm_sqr())
        .sum()
}

/// Restriction exponents used by the Lipschitz and tail estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentTable {
    pub delta_n: f64,
    pub kappa_n: f64,
    /// Dimension three carries an extra `sqrt(log(1/h))`.
    pub log_loss: bool,
}

impl ExponentTable {
    pub fn new(n: usize, beta: f64) -> Self {
        let (delta_n, kappa_n) = match n {
            2 => (0.25, 0.5 - beta / 4.0),
            3 => (0.5, 0.5),
            _ => ((n as f64 - 1.0) / 2.0 - 0.5, 0.5),
        };
        ExponentTable {
            delta_n,
            kappa_n,
            log_loss: n == 3,
        }
    }

    pub fn for_params(params: &ModelParams) -> Self {
        Self::new(params.n, params.beta)
    }
}

/// `h^{-beta delta(n) + (beta - 1)/2}`, times `sqrt(log(1/h))` when `n = 3`.
pub fn theoretical_lipschitz_f(params: &ModelParams) -> f64 {
    let t = ExponentTable::for_params(params);
    let base = params
        .h
        .powf(-params.beta * t.delta_n + (params.beta - 1.0) / 2.0);
    if t.log_loss {
        base * (1.0 / params.h).ln().sqrt()
    } else {
        base
    }
}

/// Exponent `e` of the uniform-grid spacing `h^e`.
pub fn grid_spacing_exponent(n: usize, beta: f64) -> f64 {
    if n == 2 {
        beta / 2.0 + (2.0 - beta) * (0.5 - beta / 4.0)
    } else {
        let n = n as f64;
        n - 2.0 + (n - beta) / 2.0
    }
}

/// Grid of unit segments covering `B_1(0) x S^{n-1}`.
///
/// For every direction `xi` the base points are `a xi + b_1 e_1 + ...` with
/// `(a, b)` on the cubic lattice of mesh `step` in an orthonormal frame
/// `(xi, e_1, ...)`. Containment depends only on `(a, b)`, so every
/// direction shares the same offset set.
#[derive(Debug, Clone)]
pub struct UniformGrid {
    pub n: usize,
    /// Nominal spacing `h^e`.
    pub spacing: f64,
    /// Mesh actually used, `1 / ceil(1/spacing) <= spacing`, so unit
    /// segments start and end on mesh points.
    pub step: f64,
    pub spacing_exponent: f64,
    /// `count ~ h^{-count_exponent}`.
    pub count_exponent: f64,
    pub directions: Vec<Vec<f64>>,
    /// Integer frame offsets `(a, b_1, ...)` in units of `step`.
    pub offsets: Vec<Vec<i64>>,
}

impl UniformGrid {
    pub fn count(&self) -> usize {
        self.directions.len() * self.offsets.len()
    }

    /// Orthonormal frame `(xi, e_1, ..., e_{n-1})`.
    pub fn frame(xi: &[f64]) -> Vec<Vec<f64>> {
        orthonormal_frame(xi)
    }

    pub fn segment(&self, direction: usize, offset: usize) -> Segment {
        let frame = orthonormal_frame(&self.directions[direction]);
        let off = &self.offsets[offset];
        let mut x = vec![0.0; self.n];
        for (k, e) in frame.iter().enumerate() {
            for (xc, ec) in x.iter_mut().zip(e) {
                *xc += off[k] as f64 * self.step * ec;
            }
        }
        Segment {
            x,
            xi: self.directions[direction].clone(),
        }
    }

    pub fn segments(&self) -> impl Iterator<Item = Segment> + '_ {
        (0..self.directions.len())
            .flat_map(move |d| (0..self.offsets.len()).map(move |o| self.segment(d, o)))
    }
}

pub(crate) fn orthonormal_frame(xi: &[f64]) -> Vec<Vec<f64>> {
    let n = xi.len();
    let mut frame = vec![xi.to_vec()];
    if n == 2 {
        frame.push(vec![-xi[1], xi[0]]);
        return frame;
    }
    // Gram–Schmidt against the coordinate axes, least aligned first
    let mut axes: Vec<usize> = (0..n).collect();
    axes.sort_by(|&a, &b| xi[a].abs().total_cmp(&xi[b].abs()));
    for &axis in &axes {
        if frame.len() == n {
            break;
        }
        let mut v = vec![0.0; n];
        v[axis] = 1.0;
        for f in &frame {
            let p = dot(&v, f);
            for (vc, fc) in v.iter_mut().zip(f) {
                *vc -= p * fc;
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-8 {
            frame.push(v.into_iter().map(|c| c / norm).collect());
        }
    }
    frame
}

pub(crate) fn sphere_directions(n: usize, spacing: f64) -> Vec<Vec<f64>> {
    match n {
        2 => {
            let k = (2.0 * PI / spacing).ceil() as usize;
            (0..k)
                .map(|i| {
                    let t = 2.0 * PI * i as f64 / k as f64;
                    vec![t.cos(), t.sin()]
                })
                .collect()
        }
        _ => {
            let m = ((4.0 * PI) / (spacing * spacing)).ceil() as usize;
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..m)
                .map(|i| {
                    let z = 1.0 - (2.0 * i as f64 + 1.0) / m as f64;
                    let rho = (1.0 - z * z).max(0.0).sqrt();
                    let phi = golden * i as f64;
                    vec![rho * phi.cos(), rho * phi.sin(), z]
                })
                .collect()
        }
    }
}

/// The grid of `(x, xi)` used to bound the exception set uniformly.
pub fn uniform_grid(params: &ModelParams, budget: u128) -> Result<UniformGrid> {
    params.validate()?;
    let n = params.n;
    if n > 3 {
        return Err(Error::InvalidParams(format!(
            "uniform grid is available for n = 2, 3 only (got n = {n})"
        )));
    }
    let e = grid_spacing_exponent(n, params.beta);
    let spacing = params.h.powf(e);
    let per_unit = (1.0 / spacing).ceil();
    let step = 1.0 / per_unit;
    // cheap upper bound before enumerating anything
    let dirs_est: u128 = if n == 2 {
        (2.0 * PI / spacing).ceil() as u128
    } else {
        ((4.0 * PI) / (spacing * spacing)).ceil() as u128
    };
    let box_est = ((2.0 * per_unit + 1.0) as u128).saturating_pow(n as u32);
    let requested = dirs_est.saturating_mul(box_est);
    if requested > budget {
        // tighter estimate: offsets fill ~0.39 of a disk of radius 1 in the plane
        let vol = if n == 2 { PI } else { 4.0 * PI / 3.0 };
        let tight = (dirs_est as f64 * vol * 0.4 * per_unit.powi(n as i32)) as u128;
        if tight > budget {
            return Err(Error::BudgetExceeded {
                what: "uniform grid",
                requested: tight,
                budget,
            });
        }
    }
    let limit = 1.0 - CONTAINMENT_MARGIN;
    let lim2 = limit * limit;
    let span = per_unit as i64;
    let mut offsets = Vec::new();
    let mut idx = vec![-span; n];
    'outer: loop {
        let a = idx[0] as f64 * step;
        let b2: f64 = idx[1..].iter().map(|&b| (b as f64 * step).powi(2)).sum();
        if a * a + b2 <= lim2 && (a + 1.0) * (a + 1.0) + b2 <= lim2 {
            offsets.push(idx.clone());
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
    let directions = sphere_directions(n, spacing);
    let count = directions.len() as u128 * offsets.len() as u128;
    if count > budget {
        return Err(Error::BudgetExceeded {
            what: "uniform grid",
            requested: count,
            budget,
        });
    }
    Ok(UniformGrid {
        n,
        spacing,
        step,
        spacing_exponent: e,
        count_exponent: (2 * n - 1) as f64 * e,
        directions,
        offsets,
    })
}

/// Composite Boole weights (in units of `2 tau / 45`) by index mod 4, for
/// interior nodes.
const BOOLE: [f64; 4] = [14.0, 32.0, 12.0, 32.0];

/// Evaluates `F` on every segment of a planar [`UniformGrid`] by sampling
/// `u` along the grid lines of each direction and integrating windows with
/// Boole's rule.
#[derive(Debug, Clone)]
pub struct LineScanner {
    grid: UniformGrid,
    /// Sub-steps per grid step (multiple of 4).
    sub: usize,
    tau: f64,
    /// Line offsets `b` (units of step) that carry at least one segment.
    lines: Vec<i64>,
    /// For every line, the `a` offsets of its segments.
    starts: Vec<Vec<i64>>,
    span: i64,
}

impl LineScanner {
    pub fn new(grid: UniformGrid, h: f64) -> Result<Self> {
        if grid.n != 2 {
            return Err(Error::InvalidParams(
                "line scanning is implemented for n = 2".into(),
            ));
        }
        // Boole's rule at tau <= h/3 keeps |u|^2 (bandwidth 2/h) to ~1e-4
        let sub = ((grid.step / (h / 3.0)).ceil() as usize).div_ceil(4) * 4;
        let tau = grid.step / sub as f64;
        let mut lines: Vec<i64> = grid.offsets.iter().map(|o| o[1]).collect();
        lines.sort_unstable();
        lines.dedup();
        let starts = lines
            .iter()
            .map(|&b| {
                let mut a: Vec<i64> = grid
                    .offsets
                    .iter()
                    .filter(|o| o[1] == b)
                    .map(|o| o[0])
                    .collect();
                a.sort_unstable();
                a
            })
            .collect();
        let span = (1.0 / grid.step).round() as i64;
        Ok(LineScanner {
            grid,
            sub,
            tau,
            lines,
            starts,
            span,
        })
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    /// Nodes `t_i = -1 + i tau`, `i = 0 ..= 2 span sub`.
    fn t_count(&self) -> usize {
        2 * self.span as usize * self.sub + 1
    }

    /// Plane waves along the lines of direction `d`: `T (t_count x N)` and
    /// `P (lines x N)` with `u(t, b) = sum_j c_j T_tj P_bj`.
    pub fn direction_factors(
        &self,
        lattice: &MomentumLattice,
        d: usize,
    ) -> (PlaneWaveMatrix, PlaneWaveMatrix) {
        let frame = orthonormal_frame(&self.grid.directions[d]);
        let tc = self.t_count();
        let along: Vec<f64> = (0..tc)
            .flat_map(|i| {
                let t = -1.0 + i as f64 * self.tau;
                frame[0].iter().map(move |c| c * t)
            })
            .collect();
        let across: Vec<f64> = self
            .lines
            .iter()
            .flat_map(|&b| {
                let b = b as f64 * self.grid.step;
                frame[1].iter().map(move |c| c * b)
            })
            .collect();
        (
            PlaneWaveMatrix::new(&along, lattice),
            PlaneWaveMatrix::new(&across, lattice),
        )
    }

    /// `F` on every grid segment of direction `d` for coefficients `c`,
    /// in `(line, start)` order.
    pub fn scan_direction(
        &self,
        along: &PlaneWaveMatrix,
        across: &PlaneWaveMatrix,
        c: &[f64],
    ) -> Vec<f64> {
        let m = DMatrix::from_column_slice(c.len(), 1, c);
        self.scan_direction_batch(along, across, &m).pop().unwrap()
    }

    /// [`LineScanner::scan_direction`] for every column of `coeffs`.
    ///
    /// `u(t, b) = sum_j T_tj c_j P_bj`, so stacking `diag(c_d) P^T` over the
    /// draws turns the whole batch into one complex product.
    pub fn scan_direction_batch(
        &self,
        along: &PlaneWaveMatrix,
        across: &PlaneWaveMatrix,
        coeffs: &DMatrix<f64>,
    ) -> Vec<Vec<f64>> {
        let tc = self.t_count();
        let count = coeffs.nrows();
        let draws = coeffs.ncols();
        let lines = self.lines.len();
        let mut rre = DMatrix::zeros(count, lines * draws);
        let mut rim = DMatrix::zeros(count, lines * draws);
        for d in 0..draws {
            for l in 0..lines {
                for j in 0..count {
                    let c = coeffs[(j, d)];
                    rre[(j, d * lines + l)] = c * across.re[(l, j)];
                    rim[(j, d * lines + l)] = c * across.im[(l, j)];
                }
            }
        }
        let ur = &along.re * &rre - &along.im * &rim;
        let ui = &along.re * &rim + &along.im * &rre;
        let window = (self.span as usize) * self.sub;
        let scale = 2.0 * self.tau / 45.0;
        let mut prefix = vec![0.0; tc + 1];
        let mut f = vec![0.0; tc];
        (0..draws)
            .map(|d| {
                let mut out = Vec::with_capacity(self.grid.offsets.len());
                for (l, starts) in self.starts.iter().enumerate() {
                    let col = d * lines + l;
                    // prefix sums of Boole-weighted |u|^2 along the line
                    let mut acc = 0.0;
                    for i in 0..tc {
                        f[i] = ur[(i, col)].powi(2) + ui[(i, col)].powi(2);
                        acc += BOOLE[i % 4] * f[i];
                        prefix[i + 1] = acc;
                    }
                    for &a in starts {
                        let i0 = ((a + self.span) as usize) * self.sub;
                        let i1 = i0 + window;
                        let inner = prefix[i1 + 1] - prefix[i0];
                        let sq = scale * (inner - 7.0 * f[i0] - 7.0 * f[i1]);
                        out.push(sq.max(0.0).sqrt());
                    }
                }
                out
            })
            .collect()
    }

    /// Segments in the order produced by [`LineScanner::scan_direction`].
    pub fn direction_segments(&self, d: usize) -> Vec<Segment> {
        let frame = orthonormal_frame(&self.grid.directions[d]);
        let mut out = Vec::new();
        for (l, starts) in self.starts.iter().enumerate() {
            let b = self.lines[l] as f64 * self.grid.step;
            for &a in starts {
                let a = a as f64 * self.grid.step;
                let x = vec![
                    a * frame[0][0] + b * frame[1][0],
                    a * frame[0][1] + b * frame[1][1],
                ];
                out.push(Segment {
                    x,
                    xi: frame[0].clone(),
                });
            }
        }
        out
    }
}
