//! Experiment drivers. Every driver sweeps `h`, draws its ensembles from
//! counter-derived seeds and returns a typed report that renders to CSV.

use std::ops::Range;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde_json::json;

use crate::concentration::{empirical_median_tails, phi_commute_gap, PhiSpec, TailCurve};
use crate::ensemble::config::{ExperimentConfig, ExperimentKind};
use crate::ensemble::output::{fmt_f, Artifact, Table};
use crate::ensemble::stats::{wilson_interval, EnsembleStats, Z95};
use crate::error::{Error, Result};
use crate::model::coeffs::{draw_seed, standard_normals};
use crate::model::cutoff::CutoffFunction;
use crate::model::lattice::MomentumLattice;
use crate::model::params::ModelParams;
use crate::phasespace::gram::{build_gram, LocalizerGram, GRAM_BUDGET};
use crate::phasespace::profile::EnvelopeProfile;
use crate::phasespace::scan::{phase_grid, PhaseScanner};
use crate::phasespace::spectral::{log_log_slope, trace_report, SpectralData, TraceRow};
use crate::phasespace::symbol::LocalizerSymbol;
use crate::xray::{
    theoretical_lipschitz_f, uniform_grid, ExponentTable, LineScanner, Segment,
    SegmentQuadrature, XRayGram,
};

/// Draws processed per batched product.
const DRAW_CHUNK: usize = 256;
/// Draws per batch in the uniform X-ray scan (its products are wider).
const SCAN_CHUNK: usize = 32;

/// Master seed of sweep level `level`.
pub fn level_seed(master: u64, level: usize) -> u64 {
    draw_seed(master ^ 0x6A09_E667_F3BC_C909, level as u64)
}

/// Seeds and `N x len(range)` coefficient matrix of draws `range` under
/// `master`; each column depends only on its index.
pub fn draw_batch(modes: usize, master: u64, range: Range<usize>) -> (Vec<u64>, DMatrix<f64>) {
    let sigma = (modes as f64).sqrt().recip();
    let cols: Vec<(u64, Vec<f64>)> = range
        .into_par_iter()
        .map(|i| {
            let seed = draw_seed(master, i as u64);
            (seed, standard_normals(modes, seed))
        })
        .collect();
    let mut m = DMatrix::zeros(modes, cols.len());
    for (d, (_, z)) in cols.iter().enumerate() {
        for (j, v) in z.iter().enumerate() {
            m[(j, d)] = sigma * v;
        }
    }
    (cols.into_iter().map(|c| c.0).collect(), m)
}

/// `c_d^T M c_d` for every column `c_d` of `c`.
pub fn quadratic_forms(m: &DMatrix<f64>, c: &DMatrix<f64>) -> Vec<f64> {
    let y = m * c;
    (0..c.ncols()).map(|d| c.column(d).dot(&y.column(d))).collect()
}

/// Runs `per_chunk` over consecutive draw chunks and concatenates results.
fn over_draws<F>(modes: usize, master: u64, samples: usize, chunk: usize, mut per_chunk: F) -> Result<Vec<u64>>
where
    F: FnMut(&DMatrix<f64>) -> Result<()>,
{
    let mut seeds = Vec::with_capacity(samples);
    let mut lo = 0;
    while lo < samples {
        let hi = (lo + chunk).min(samples);
        let (s, c) = draw_batch(modes, master, lo..hi);
        per_chunk(&c)?;
        seeds.extend(s);
        lo = hi;
    }
    Ok(seeds)
}

fn unit(n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[0] = 1.0;
    v
}

/// The configured segment, or `x = -e_1 / 2`, `xi = e_1`.
pub fn config_segment(config: &ExperimentConfig) -> Result<Segment> {
    let n = config.params.n;
    match &config.segment {
        Some(s) => Segment::new(s.x.clone(), s.xi.clone()).map_err(|e| Error::Config(e.to_string())),
        None => {
            let mut x = vec![0.0; n];
            x[0] = -0.5;
            Segment::new(x, unit(n))
        }
    }
}

/// The configured phase-space centre, or `(0, e_1)`.
pub fn config_centre(config: &ExperimentConfig) -> (Vec<f64>, Vec<f64>) {
    let n = config.params.n;
    match &config.phase {
        Some(p) => (p.x.clone(), p.xi.clone()),
        None => (vec![0.0; n], unit(n)),
    }
}

fn lattice_at(config: &ExperimentConfig, h: f64) -> Result<(ModelParams, Arc<MomentumLattice>)> {
    let p = config.params_at(h)?;
    Ok((p, Arc::new(config.lattice(&p)?)))
}

fn sqrt_all(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.max(0.0).sqrt()).collect()
}

fn f_samples(lattice: &MomentumLattice, segment: &Segment, master: u64, samples: usize) -> Result<(Vec<u64>, Vec<f64>, XRayGram)> {
    let gram = XRayGram::build(lattice, segment);
    let re = gram.real_part();
    let mut f_sq = Vec::with_capacity(samples);
    let seeds = over_draws(lattice.len(), master, samples, DRAW_CHUNK, |c| {
        f_sq.extend(quadratic_forms(&re, c).into_iter().map(|v| v.max(0.0)));
        Ok(())
    })?;
    Ok((seeds, f_sq, gram))
}

// ---------------------------------------------------------------- X-ray, one segment

#[derive(Debug, Clone)]
pub struct XrayPointLevel {
    pub params: ModelParams,
    pub modes: usize,
    pub kappa: f64,
    pub f: EnsembleStats,
    pub f_sq: EnsembleStats,
    /// `2 ||Re B||_F^2 / N^2`, the exact variance of `F^2`.
    pub f_sq_variance: f64,
    /// `|mean(F) - 1| N^{kappa(n)}`.
    pub scaled_deviation: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct XrayPointReport {
    pub segment: Segment,
    pub levels: Vec<XrayPointLevel>,
}

pub fn run_xray_point(config: &ExperimentConfig, segment: &Segment) -> Result<XrayPointReport> {
    let mut levels = Vec::new();
    for (k, h) in config.sweep().into_iter().enumerate() {
        let (params, lattice) = lattice_at(config, h)?;
        let master = level_seed(config.experiment.seed, k);
        let (seeds, f_sq, gram) = f_samples(&lattice, segment, master, config.experiment.samples)?;
        let values = sqrt_all(&f_sq);
        let modes = lattice.len();
        let kappa = ExponentTable::for_params(&params).kappa_n;
        let f = EnsembleStats::from_samples(&values, seeds.clone())?;
        let re_sq: f64 = gram.b.iter().map(|z| z.re * z.re).sum();
        levels.push(XrayPointLevel {
            params,
            modes,
            kappa,
            scaled_deviation: (f.mean - 1.0).abs() * (modes as f64).powf(kappa),
            f,
            f_sq: EnsembleStats::from_samples(&f_sq, seeds)?,
            f_sq_variance: 2.0 * re_sq / (modes as f64).powi(2),
            values,
        });
    }
    Ok(XrayPointReport {
        segment: segment.clone(),
        levels,
    })
}

fn coord_header(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|k| format!("{prefix}_{k}")).collect()
}

impl XrayPointReport {
    pub fn artifacts(&self) -> Result<Vec<Artifact>> {
        let n = self.segment.dim();
        let mut header = vec!["h".to_string(), "seed".to_string()];
        header.extend(coord_header("x", n));
        header.extend(coord_header("xi", n));
        header.extend(["F".to_string(), "F2".to_string()]);
        let mut rows = Table::new(&header);
        let mut summary = Table::new(&[
            "h", "N", "kappa", "samples", "mean_F", "se_F", "median_F", "mean_F2", "se_F2",
            "var_F2", "var_F2_exact", "scaled_deviation",
        ]);
        for l in &self.levels {
            for (seed, &v) in l.f.seeds.iter().zip(&l.values) {
                let mut r = vec![fmt_f(l.params.h), seed.to_string()];
                r.extend(self.segment.x().iter().map(|&v| fmt_f(v)));
                r.extend(self.segment.xi().iter().map(|&v| fmt_f(v)));
                r.extend([fmt_f(v), fmt_f(v * v)]);
                rows.push(r);
            }
            summary.push(vec![
                fmt_f(l.params.h),
                l.modes.to_string(),
                fmt_f(l.kappa),
                l.f.count.to_string(),
                fmt_f(l.f.mean),
                fmt_f(l.f.se),
                fmt_f(l.f.median),
                fmt_f(l.f_sq.mean),
                fmt_f(l.f_sq.se),
                fmt_f(l.f_sq.variance),
                fmt_f(l.f_sq_variance),
                fmt_f(l.scaled_deviation),
            ]);
        }
        Ok(vec![
            Artifact::csv("xray_point.csv", &rows)?,
            Artifact::csv("xray_point_summary.csv", &summary)?,
        ])
    }

    pub fn headline(&self) -> String {
        let parts: Vec<String> = self
            .levels
            .iter()
            .map(|l| {
                format!(
                    "h={} N={} E[F]={:.4}±{:.4} E[F^2]={:.4}±{:.4}",
                    l.params.h, l.modes, l.f.mean, l.f.se, l.f_sq.mean, l.f_sq.se
                )
            })
            .collect();
        format!("xray-point: {}", parts.join("; "))
    }
}

// ---------------------------------------------------------------- X-ray, uniform grid

#[derive(Debug, Clone, PartialEq)]
pub struct ExceptionRow {
    pub factor: f64,
    pub m: f64,
    pub violations: usize,
    pub fraction: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    /// `exp(-N^{2 kappa} m^2)`.
    pub bound: f64,
}

#[derive(Debug, Clone)]
pub struct XrayUniformLevel {
    pub params: ModelParams,
    pub modes: usize,
    pub kappa: f64,
    /// `m(h)` before the factors are applied.
    pub m: f64,
    pub grid_points: usize,
    pub spacing: f64,
    pub count_exponent: f64,
    pub seeds: Vec<u64>,
    /// Per draw, `max |F - 1|` over the grid.
    pub max_deviation: Vec<f64>,
    pub rows: Vec<ExceptionRow>,
}

#[derive(Debug, Clone)]
pub struct XrayUniformReport {
    pub levels: Vec<XrayUniformLevel>,
}

/// Per draw `max |F - 1|` over every segment of the uniform grid.
pub fn grid_max_deviation(
    params: &ModelParams,
    lattice: &MomentumLattice,
    budget: u128,
    coeffs: &DMatrix<f64>,
) -> Result<(Vec<f64>, crate::xray::UniformGrid)> {
    let grid = uniform_grid(params, budget)?;
    let draws = coeffs.ncols();
    let fold = |mut a: Vec<f64>, b: Vec<f64>| {
        for (x, y) in a.iter_mut().zip(b) {
            *x = x.max(y);
        }
        a
    };
    let dev = if params.n == 2 {
        let scanner = LineScanner::new(grid.clone(), params.h)?;
        (0..grid.directions.len())
            .into_par_iter()
            .map(|d| {
                let (along, across) = scanner.direction_factors(lattice, d);
                let mut best = vec![0.0f64; draws];
                let mut lo = 0;
                while lo < draws {
                    let hi = (lo + SCAN_CHUNK).min(draws);
                    let chunk = coeffs.columns(lo, hi - lo).into_owned();
                    for (k, values) in scanner.scan_direction_batch(&along, &across, &chunk).into_iter().enumerate() {
                        for v in values {
                            best[lo + k] = best[lo + k].max((v - 1.0).abs());
                        }
                    }
                    lo = hi;
                }
                best
            })
            .reduce(|| vec![0.0; draws], fold)
    } else {
        let segments: Vec<Segment> = grid.segments().collect();
        segments
            .par_iter()
            .map(|s| {
                SegmentQuadrature::new(lattice, s)
                    .f_squared_batch(coeffs)
                    .into_iter()
                    .map(|v| (v.max(0.0).sqrt() - 1.0).abs())
                    .collect::<Vec<f64>>()
            })
            .reduce(|| vec![0.0; draws], fold)
    };
    Ok((dev, grid))
}

/// Exception frequencies at `m * factor` for each factor.
pub fn exception_rows(max_deviation: &[f64], m: f64, factors: &[f64], modes: usize, kappa: f64) -> Vec<ExceptionRow> {
    let draws = max_deviation.len();
    let scale = (modes as f64).powf(2.0 * kappa);
    factors
        .iter()
        .map(|&factor| {
            let mf = m * factor;
            let violations = max_deviation.iter().filter(|&&d| d > mf).count();
            let (wilson_lo, wilson_hi) = wilson_interval(violations, draws, Z95);
            ExceptionRow {
                factor,
                m: mf,
                violations,
                fraction: violations as f64 / draws as f64,
                wilson_lo,
                wilson_hi,
                bound: (-scale * mf * mf).exp(),
            }
        })
        .collect()
}

pub fn run_xray_uniform(config: &ExperimentConfig) -> Result<XrayUniformReport> {
    let mut levels = Vec::new();
    let mut factors = config.experiment.m_factors.clone();
    factors.sort_by(f64::total_cmp);
    for (k, h) in config.sweep().into_iter().enumerate() {
        let (params, lattice) = lattice_at(config, h)?;
        let modes = lattice.len();
        let master = level_seed(config.experiment.seed, k);
        let (seeds, coeffs) = draw_batch(modes, master, 0..config.experiment.samples);
        let (max_deviation, grid) =
            grid_max_deviation(&params, &lattice, config.experiment.grid_budget as u128, &coeffs)?;
        let kappa = ExponentTable::for_params(&params).kappa_n;
        let m = config.exception_threshold(&params, modes);
        levels.push(XrayUniformLevel {
            params,
            modes,
            kappa,
            m,
            grid_points: grid.count(),
            spacing: grid.spacing,
            count_exponent: grid.count_exponent,
            rows: exception_rows(&max_deviation, m, &factors, modes, kappa),
            seeds,
            max_deviation,
        });
    }
    Ok(XrayUniformReport { levels })
}

impl XrayUniformReport {
    pub fn artifacts(&self) -> Result<Vec<Artifact>> {
        let mut t = Table::new(&[
            "h", "N", "kappa", "grid_points", "spacing", "count_exponent", "draws", "factor", "m",
            "violations", "fraction", "wilson_lo", "wilson_hi", "bound",
        ]);
        let mut draws = Table::new(&["h", "seed", "max_deviation"]);
        for l in &self.levels {
            for r in &l.rows {
                t.push(vec![
                    fmt_f(l.params.h),
                    l.modes.to_string(),
                    fmt_f(l.kappa),
                    l.grid_points.to_string(),
                    fmt_f(l.spacing),
                    fmt_f(l.count_exponent),
                    l.max_deviation.len().to_string(),
                    fmt_f(r.factor),
                    fmt_f(r.m),
                    r.violations.to_string(),
                    fmt_f(r.fraction),
                    fmt_f(r.wilson_lo),
                    fmt_f(r.wilson_hi),
                    fmt_f(r.bound),
                ]);
            }
            for (s, d) in l.seeds.iter().zip(&l.max_deviation) {
                draws.push(vec![fmt_f(l.params.h), s.to_string(), fmt_f(*d)]);
            }
        }
        Ok(vec![
            Artifact::csv("xray_uniform.csv", &t)?,
            Artifact::csv("xray_uniform_draws.csv", &draws)?,
        ])
    }

    pub fn headline(&self) -> String {
        let parts: Vec<String> = self
            .levels
            .iter()
            .filter_map(|l| {
                l.rows.first().map(|r| {
                    format!(
                        "h={} grid={} m={:.4} violating={:.3} bound={:.3e}",
                        l.params.h, l.grid_points, r.m, r.fraction, r.bound
                    )
                })
            })
            .collect();
        format!("xray-uniform: {}", parts.join("; "))
    }
}

// ---------------------------------------------------------------- phase space, one centre

fn profile_for(n: usize) -> Result<Arc<EnvelopeProfile>> {
    Ok(Arc::new(EnvelopeProfile::new(n, CutoffFunction::default())?))
}

/// `G` at the gram's centre for every column of `coeffs`.
pub fn g_batch(gram: &LocalizerGram, coeffs: &DMatrix<f64>) -> Vec<f64> {
    let re = gram.psi.map(|z| z.re);
    let restricted = DMatrix::from_fn(gram.active.len(), coeffs.ncols(), |a, d| coeffs[(gram.active[a], d)]);
    sqrt_all(&quadratic_forms(&re, &restricted))
}

#[derive(Debug, Clone)]
pub struct PhasePointLevel {
    pub params: ModelParams,
    pub modes: usize,
    pub active: usize,
    pub trace: f64,
    pub g: EnsembleStats,
    pub g_sq: EnsembleStats,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PhasePointReport {
    pub centre: (Vec<f64>, Vec<f64>),
    pub levels: Vec<PhasePointLevel>,
}

pub fn run_phase_point(config: &ExperimentConfig) -> Result<PhasePointReport> {
    let centre = config_centre(config);
    let profile = profile_for(config.params.n)?;
    let mut levels = Vec::new();
    for (k, h) in config.sweep().into_iter().enumerate() {
        let (params, lattice) = lattice_at(config, h)?;
        let symbol = LocalizerSymbol::new(params, &lattice, centre.0.clone(), centre.1.clone(), &profile)?;
        let gram = build_gram(&symbol, &lattice, &profile, GRAM_BUDGET)?;
        let master = level_seed(config.experiment.seed, k);
        let mut values = Vec::new();
        let seeds = over_draws(lattice.len(), master, config.experiment.samples, DRAW_CHUNK, |c| {
            values.extend(g_batch(&gram, c));
            Ok(())
        })?;
        let sq: Vec<f64> = values.iter().map(|v| v * v).collect();
        let trace = gram.psi.diagonal().iter().map(|z| z.re).sum::<f64>() / gram.count as f64;
        levels.push(PhasePointLevel {
            params,
            modes: lattice.len(),
            active: gram.len(),
            trace,
            g: EnsembleStats::from_samples(&values, seeds.clone())?,
            g_sq: EnsembleStats::from_samples(&sq, seeds)?,
            values,
        });
    }
    Ok(PhasePointReport { centre, levels })
}

impl PhasePointReport {
    pub fn artifacts(&self) -> Result<Vec<Artifact>> {
        let mut rows = Table::new(&["h", "mu", "seed", "G", "G2"]);
        let mut summary = Table::new(&[
            "h", "mu", "N", "N_active", "trace", "samples", "mean_G", "se_G", "median_G", "mean_G2",
            "se_G2",
        ]);
        for l in &self.levels {
            for (s, &v) in l.g.seeds.iter().zip(&l.values) {
                rows.push(vec![fmt_f(l.params.h), fmt_f(l.params.mu), s.to_string(), fmt_f(v), fmt_f(v * v)]);
            }
            summary.push(vec![
                fmt_f(l.params.h),
                fmt_f(l.params.mu),
                l.modes.to_string(),
                l.active.to_string(),
                fmt_f(l.trace),
                l.g.count.to_string(),
                fmt_f(l.g.mean),
                fmt_f(l.g.se),
                fmt_f(l.g.median),
                fmt_f(l.g_sq.mean),
                fmt_f(l.g_sq.se),
            ]);
        }
        Ok(vec![
            Artifact::csv("phase_point.csv", &rows)?,
            Artifact::csv("phase_point_summary.csv", &summary)?,
        ])
    }

    pub fn headline(&self) -> String {
        let parts: Vec<String> = self
            .levels
            .iter()
            .map(|l| format!("h={} mu={:.3} E[G]={:.4}±{:.4}", l.params.h, l.params.mu, l.g.mean, l.g.se))
            .collect();
        format!("phase-point: {}", parts.join("; "))
    }
}

// ---------------------------------------------------------------- phase space, sup over a grid

#[derive(Debug, Clone)]
pub struct PhaseSupLevel {
    pub params: ModelParams,
    pub modes: usize,
    pub grid_points: usize,
    pub sup: EnsembleStats,
    /// `(mean over the grid of G^2)^{1/2}`.
    pub l2: EnsembleStats,
    /// `G` at the configured centre for the same draws.
    pub point: EnsembleStats,
    /// `mean(sup G) / sqrt(log(1/h))`.
    pub ratio: f64,
    pub sup_values: Vec<f64>,
    pub l2_values: Vec<f64>,
    pub point_values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PhaseSupReport {
    pub levels: Vec<PhaseSupLevel>,
}

pub fn run_phase_sup(config: &ExperimentConfig) -> Result<PhaseSupReport> {
    let centre = config_centre(config);
    let profile = profile_for(config.params.n)?;
    let e = &config.experiment;
    let mut levels = Vec::new();
    for (k, h) in config.sweep().into_iter().enumerate() {
        let (params, lattice) = lattice_at(config, h)?;
        let grid = phase_grid(&params, e.x_spacing, e.xi_spacing, e.grid_budget as u128)?;
        let grid_points = grid.count();
        let scanner = PhaseScanner::new(params, lattice.clone(), profile.clone(), grid)?;
        let symbol = LocalizerSymbol::new(params, &lattice, centre.0.clone(), centre.1.clone(), &profile)?;
        let gram = build_gram(&symbol, &lattice, &profile, GRAM_BUDGET)?;
        let master = level_seed(e.seed, k);
        let (mut sup, mut l2, mut point) = (Vec::new(), Vec::new(), Vec::new());
        let seeds = over_draws(lattice.len(), master, e.samples, DRAW_CHUNK, |c| {
            let s = scanner.scan(c)?;
            sup.extend(s.sup);
            l2.extend(sqrt_all(&s.mean_sq));
            point.extend(g_batch(&gram, c));
            Ok(())
        })?;
        let sup_stats = EnsembleStats::from_samples(&sup, seeds.clone())?;
        levels.push(PhaseSupLevel {
            params,
            modes: lattice.len(),
            grid_points,
            ratio: sup_stats.mean / (1.0 / h).ln().sqrt(),
            sup: sup_stats,
            l2: EnsembleStats::from_samples(&l2, seeds.clone())?,
            point: EnsembleStats::from_samples(&point, seeds)?,
            sup_values: sup,
            l2_values: l2,
            point_values: point,
        });
    }
    Ok(PhaseSupReport { levels })
}

impl PhaseSupReport {
    pub fn artifacts(&self) -> Result<Vec<Artifact>> {
        let mut rows = Table::new(&["h", "mu", "seed", "sup_G", "l2_G", "point_G"]);
        let mut summary = Table::new(&[
            "h", "mu", "N", "grid_points", "samples", "mean_sup_G", "se_sup_G", "mean_point_G",
            "se_point_G", "mean_l2_G", "ratio_sqrt_log",
        ]);
        for l in &self.levels {
            for i in 0..l.sup.count {
                rows.push(vec![
                    fmt_f(l.params.h),
                    fmt_f(l.params.mu),
                    l.sup.seeds[i].to_string(),
                    fmt_f(l.sup_values[i]),
                    fmt_f(l.l2_values[i]),
                    fmt_f(l.point_values[i]),
                ]);
            }
            summary.push(vec![
                fmt_f(l.params.h),
                fmt_f(l.params.mu),
                l.modes.to_string(),
                l.grid_points.to_string(),
                l.sup.count.to_string(),
                fmt_f(l.sup.mean),
                fmt_f(l.sup.se),
                fmt_f(l.point.mean),
                fmt_f(l.point.se),
                fmt_f(l.l2.mean),
                fmt_f(l.ratio),
            ]);
        }
        Ok(vec![
            Artifact::csv("phase_sup.csv", &rows)?,
            Artifact::csv("phase_sup_summary.csv", &summary)?,
        ])
    }

    pub fn headline(&self) -> String {
        let parts: Vec<String> = self
            .levels
            .iter()
            .map(|l| {
                format!(
                    "h={} E[sup G]={:.4}±{:.4} E[G]={:.4} ratio={:.4}",
                    l.params.h, l.sup.mean, l.sup.se, l.point.mean, l.ratio
                )
            })
            .collect();
        format!("phase-sup: {}", parts.join("; "))
    }
}

// ---------------------------------------------------------------- traces of A

#[derive(Debug, Clone)]
pub struct TracesReport {
    pub rows: Vec<TraceRow>,
    pub spectra: Vec<SpectralData>,
    /// `(h, slope of ln Tr(A^2) against ln mu)`.
    pub slopes: Vec<(f64, f64)>,
}

pub fn run_traces(config: &ExperimentConfig) -> Result<TracesReport> {
    let centre = config_centre(config);
    let profile = profile_for(config.params.n)?;
    let mus = &config.experiment.mus;
    let (mut rows, mut spectra, mut slopes) = (Vec::new(), Vec::new(), Vec::new());
    for h in config.sweep() {
        let (params, lattice) = lattice_at(config, h)?;
        let report = trace_report(&params, &lattice, std::slice::from_ref(&centre), mus, &profile)?;
        let sq: Vec<f64> = report.iter().map(|(r, _)| r.trace_sq).collect();
        if mus.len() >= 2 {
            slopes.push((h, log_log_slope(mus, &sq)));
        }
        for (r, s) in report {
            rows.push(r);
            spectra.push(s);
        }
    }
    Ok(TracesReport { rows, spectra, slopes })
}

impl TracesReport {
    pub fn artifacts(&self) -> Result<Vec<Artifact>> {
        let mut t = Table::new(&["h", "beta", "alpha", "mu", "N_active", "trace", "trace_sq", "lambda_max_ratio"]);
        for r in &self.rows {
            t.push(vec![
                fmt_f(r.h),
                fmt_f(r.beta),
                fmt_f(r.alpha),
                fmt_f(r.mu),
                r.n_active.to_string(),
                fmt_f(r.trace),
                fmt_f(r.trace_sq),
                fmt_f(r.lambda_max_ratio),
            ]);
        }
        let spectra: Vec<_> = self
            .rows
            .iter()
            .zip(&self.spectra)
            .map(|(r, s)| json!({"h": r.h, "mu": r.mu, "eigenvalues": s.eigenvalues}))
            .collect();
        let slopes: Vec<_> = self.slopes.iter().map(|(h, s)| json!({"h": h, "slope": s})).collect();
        Ok(vec![
            Artifact::csv("traces.csv", &t)?,
            Artifact::json("spectra.json", &json!({"spectra": spectra, "trace_sq_slopes": slopes}))?,
        ])
    }

    pub fn headline(&self) -> String {
        let parts: Vec<String> = self.slopes.iter().map(|(h, s)| format!("h={h} slope Tr(A^2)={s:.3}")).collect();
        format!("traces: {} rows; {}", self.rows.len(), parts.join("; "))
    }
}

// ---------------------------------------------------------------- median tails of F

#[derive(Debug, Clone)]
pub struct TailsLevel {
    pub params: ModelParams,
    pub modes: usize,
    pub lipschitz: f64,
    pub curve: TailCurve,
    /// `3 exp(-N t^2 / (2 L^2))` at every threshold.
    pub bound: Vec<f64>,
    /// `|mean F - (mean F^2)^{1/2}|`.
    pub phi_gap: f64,
    pub f: EnsembleStats,
}

#[derive(Debug, Clone)]
pub struct TailsReport {
    pub levels: Vec<TailsLevel>,
}

pub fn run_tails(config: &ExperimentConfig, segment: &Segment) -> Result<TailsReport> {
    let phi = PhiSpec::power(2.0)?;
    let mut levels = Vec::new();
    for (k, h) in config.sweep().into_iter().enumerate() {
        let (params, lattice) = lattice_at(config, h)?;
        let master = level_seed(config.experiment.seed, k);
        let (seeds, f_sq, _) = f_samples(&lattice, segment, master, config.experiment.samples)?;
        let values = sqrt_all(&f_sq);
        let curve = empirical_median_tails(&values, config.experiment.tail_points)?;
        let lipschitz = theoretical_lipschitz_f(&params);
        let modes = lattice.len();
        let bound = curve
            .thresholds
            .iter()
            .map(|t| 3.0 * (-(modes as f64) * t * t / (2.0 * lipschitz * lipschitz)).exp())
            .collect();
        levels.push(TailsLevel {
            params,
            modes,
            lipschitz,
            bound,
            phi_gap: phi_commute_gap(&values, &phi),
            f: EnsembleStats::from_samples(&values, seeds)?,
            curve,
        });
    }
    Ok(TailsReport { levels })
}

impl TailsReport {
    pub fn artifacts(&self) -> Result<Vec<Artifact>> {
        let mut t = Table::new(&["h", "t", "two_sided", "upper", "lower", "exceedances", "bound"]);
        let mut fit = Table::new(&[
            "h", "N", "lipschitz", "median", "variance_F", "c_hat", "intercept", "residual", "t_min",
            "t_max", "fit_points", "phi_gap",
        ]);
        for l in &self.levels {
            let c = &l.curve;
            for k in 0..c.thresholds.len() {
                t.push(vec![
                    fmt_f(l.params.h),
                    fmt_f(c.thresholds[k]),
                    fmt_f(c.two_sided[k]),
                    fmt_f(c.upper[k]),
                    fmt_f(c.lower[k]),
                    c.exceedances(k).to_string(),
                    fmt_f(l.bound[k]),
                ]);
            }
            let nan = f64::NAN;
            let f = c.fit.as_ref();
            fit.push(vec![
                fmt_f(l.params.h),
                l.modes.to_string(),
                fmt_f(l.lipschitz),
                fmt_f(c.median),
                fmt_f(l.f.variance),
                fmt_f(f.map_or(nan, |f| f.c_hat)),
                fmt_f(f.map_or(nan, |f| f.intercept)),
                fmt_f(f.map_or(nan, |f| f.residual)),
                fmt_f(f.map_or(nan, |f| f.t_min)),
                fmt_f(f.map_or(nan, |f| f.t_max)),
                f.map_or(0, |f| f.points).to_string(),
                fmt_f(l.phi_gap),
            ]);
        }
        Ok(vec![Artifact::csv("tails.csv", &t)?, Artifact::csv("tails_fit.csv", &fit)?])
    }

    pub fn headline(&self) -> String {
        let parts: Vec<String> = self
            .levels
            .iter()
            .map(|l| {
                let c_hat = l.curve.fit.as_ref().map_or(f64::NAN, |f| f.c_hat);
                format!("h={} N={} median={:.4} c_hat/N={:.4}", l.params.h, l.modes, l.curve.median, c_hat / l.modes as f64)
            })
            .collect();
        format!("tails: {}", parts.join("; "))
    }
}

// ---------------------------------------------------------------- dispatch

/// Artifacts and summary line of one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub kind: ExperimentKind,
    pub artifacts: Vec<Artifact>,
    pub headline: String,
}

pub fn run_experiment(kind: ExperimentKind, config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let (artifacts, headline) = match kind {
        ExperimentKind::XrayPoint => {
            let r = run_xray_point(config, &config_segment(config)?)?;
            (r.artifacts()?, r.headline())
        }
        ExperimentKind::XrayUniform => {
            let r = run_xray_uniform(config)?;
            (r.artifacts()?, r.headline())
        }
        ExperimentKind::PhasePoint => {
            let r = run_phase_point(config)?;
            (r.artifacts()?, r.headline())
        }
        ExperimentKind::PhaseSup => {
            let r = run_phase_sup(config)?;
            (r.artifacts()?, r.headline())
        }
        ExperimentKind::Traces => {
            let r = run_traces(config)?;
            (r.artifacts()?, r.headline())
        }
        ExperimentKind::Tails => {
            let r = run_tails(config, &config_segment(config)?)?;
            (r.artifacts()?, r.headline())
        }
    };
    Ok(ExperimentOutput { kind, artifacts, headline })
}

/// Every experiment in [`ExperimentKind::ALL`] order.
pub fn run_all(config: &ExperimentConfig) -> Result<Vec<ExperimentOutput>> {
    ExperimentKind::ALL.iter().map(|&k| run_experiment(k, config)).collect()
}
