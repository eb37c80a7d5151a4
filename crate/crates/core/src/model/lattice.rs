use std::collections::HashMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::params::ModelParams;

/// The momentum set: `h`-separated points of the annulus
/// `S^{n-1} x [1 - h^beta, 1 + h^beta]`.
///
/// Points are stored flat, `n` coordinates per momentum.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumLattice {
    params: ModelParams,
    points: Vec<f64>,
}

/// Fixed count band `c1 h^(beta-n) <= N <= c2 h^(beta-n)` of the equal-angle
/// shell construction in the plane, measured over `h <= 1/4`, `beta in [0,1]`.
pub const COUNT_BAND_2D: (f64, f64) = (10.0, 22.0);
/// Same band for the Fibonacci shell construction in three dimensions.
pub const COUNT_BAND_3D: (f64, f64) = (14.0, 40.0);

impl MomentumLattice {
    /// Lattice from explicit momenta, for tests and hand-built instances.
    /// No separation check is made.
    pub fn from_points(params: ModelParams, points: Vec<Vec<f64>>) -> Result<Self> {
        params.validate()?;
        if points.is_empty() {
            return Err(Error::EmptyLattice);
        }
        let mut flat = Vec::with_capacity(points.len() * params.n);
        for p in &points {
            if p.len() != params.n {
                return Err(Error::InvalidParams(format!(
                    "momentum of dimension {} in a dimension-{} lattice",
                    p.len(),
                    params.n
                )));
            }
            flat.extend_from_slice(p);
        }
        Ok(MomentumLattice {
            params,
            points: flat,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.n
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.params.n
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn point(&self, j: usize) -> &[f64] {
        let n = self.params.n;
        &self.points[j * n..(j + 1) * n]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.params.n)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.points
    }

    /// `N / h^(beta - n)`.
    pub fn count_ratio(&self) -> f64 {
        self.len() as f64 / self.params.volume_scale()
    }

    /// Smallest pairwise distance, exact, via a cell hash with cell size
    /// `cell`. Pairs further apart than `cell` are not reported, so the
    /// result is `min(true_min, +inf)` only when `true_min <= cell`.
    pub fn min_separation_within(&self, cell: f64) -> f64 {
        min_pair_distance(&self.points, self.params.n, cell)
    }

    /// Smallest pairwise distance by brute force.
    pub fn min_separation_exact(&self) -> f64 {
        let mut best = f64::INFINITY;
        for a in 0..self.len() {
            for b in a + 1..self.len() {
                best = best.min(dist(self.point(a), self.point(b)));
            }
        }
        best
    }
}

#[inline]
pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn min_pair_distance(points: &[f64], n: usize, cell: f64) -> f64 {
    let count = points.len() / n;
    let key = |p: &[f64]| -> Vec<i64> { p.iter().map(|x| (x / cell).floor() as i64).collect() };
    let mut cells: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for j in 0..count {
        cells.entry(key(&points[j * n..(j + 1) * n])).or_default().push(j);
    }
    let offsets: Vec<Vec<i64>> = (0..3usize.pow(n as u32))
        .map(|mut code| {
            (0..n)
                .map(|_| {
                    let d = (code % 3) as i64 - 1;
                    code /= 3;
                    d
                })
                .collect()
        })
        .collect();
    let mut best = f64::INFINITY;
    for j in 0..count {
        let p = &points[j * n..(j + 1) * n];
        let base = key(p);
        for off in &offsets {
            let neighbor: Vec<i64> = base.iter().zip(off).map(|(b, o)| b + o).collect();
            if let Some(members) = cells.get(&neighbor) {
                for &k in members {
                    if k > j {
                        best = best.min(dist(p, &points[k * n..(k + 1) * n]));
                    }
                }
            }
        }
    }
    best
}

/// Radii `1 - h^beta + k h` inside the annulus, excluding the origin.
fn shell_radii(params: &ModelParams) -> Vec<f64> {
    let h = params.h;
    let w = params.annulus_half_width();
    let (r_min, r_max) = (1.0 - w, 1.0 + w);
    let shells = ((r_max - r_min) / h + 1e-9).floor() as usize + 1;
    (0..shells)
        .map(|k| r_min + k as f64 * h)
        .filter(|&r| r > 1e-12 && r <= r_max + 1e-12)
        .collect()
}

fn circle_count(r: f64, h: f64) -> usize {
    if 2.0 * r <= h {
        return 1;
    }
    let mut m = (PI / (h / (2.0 * r)).asin()).floor() as usize;
    while m > 1 && 2.0 * r * (PI / m as f64).sin() < h {
        m -= 1;
    }
    m.max(1)
}

fn fibonacci_shell(r: f64, m: usize) -> Vec<f64> {
    let golden = PI * (3.0 - 5f64.sqrt());
    let mut out = Vec::with_capacity(3 * m);
    for i in 0..m {
        let z = 1.0 - (2.0 * i as f64 + 1.0) / m as f64;
        let rho = (1.0 - z * z).max(0.0).sqrt();
        let phi = golden * i as f64;
        out.extend_from_slice(&[r * rho * phi.cos(), r * rho * phi.sin(), r * z]);
    }
    out
}

/// Largest Fibonacci net on a sphere of radius `r` with spacing at least `h`.
fn sphere_shell(r: f64, h: f64) -> Vec<f64> {
    if 2.0 * r <= h {
        return vec![0.0, 0.0, r];
    }
    // Fibonacci nets reach a nearest-neighbour distance of about 3.09 r / sqrt(m)
    let mut m = ((3.2 * r / h).powi(2)).ceil() as usize + 2;
    loop {
        let shell = fibonacci_shell(r, m);
        if m <= 2 || min_pair_distance(&shell, 3, h) >= h {
            return shell;
        }
        m = ((m as f64) * 0.98).floor() as usize;
    }
}

/// Builds the momentum lattice: equal-angle circles (n = 2) or Fibonacci
/// spheres (n = 3) on radial shells spaced `h` across the annulus.
pub fn build_lattice(params: &ModelParams) -> Result<MomentumLattice> {
    params.validate()?;
    let h = params.h;
    let radii = shell_radii(params);
    let mut points = Vec::new();
    match params.n {
        2 => {
            for &r in &radii {
                let m = circle_count(r, h);
                for i in 0..m {
                    let theta = 2.0 * PI * i as f64 / m as f64;
                    points.push(r * theta.cos());
                    points.push(r * theta.sin());
                }
            }
        }
        3 => {
            for &r in &radii {
                points.extend(sphere_shell(r, h));
            }
        }
        n => {
            return Err(Error::InvalidParams(format!(
                "lattice construction is available for n = 2, 3 only (got n = {n})"
            )))
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyLattice);
    }
    Ok(MomentumLattice {
        params: *params,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norms(l: &MomentumLattice) -> Vec<f64> {
        l.iter().map(|p| dist(p, &vec![0.0; p.len()])).collect()
    }

    #[test]
    fn coarse_lattice_invariants() {
        let p = ModelParams::new(2, 0.5, 1.0).unwrap();
        let l = build_lattice(&p).unwrap();
        for r in norms(&l) {
            assert!((0.5 - 1e-12..=1.5 + 1e-12).contains(&r), "radius {r}");
        }
        assert!(l.min_separation_exact() >= 0.5 - 1e-12);
    }

    #[test]
    fn deterministic() {
        let p = ModelParams::new(2, 1.0 / 32.0, 1.0).unwrap();
        assert_eq!(build_lattice(&p).unwrap(), build_lattice(&p).unwrap());
    }

    #[test]
    fn count_band_2d() {
        // N h^(n - beta) for the constructions exercised by the experiments
        for &(h, beta) in &[
            (1.0 / 16.0, 1.0),
            (1.0 / 64.0, 1.0),
            (1.0 / 64.0, 0.0),
            (1.0 / 32.0, 0.5),
        ] {
            let p = ModelParams::new(2, h, beta).unwrap();
            let l = build_lattice(&p).unwrap();
            let ratio = l.count_ratio();
            assert!(
                (COUNT_BAND_2D.0..=COUNT_BAND_2D.1).contains(&ratio),
                "h = {h}, beta = {beta}: ratio {ratio}"
            );
        }
    }

    #[test]
    fn separation_hash_matches_brute_force() {
        let p = ModelParams::new(2, 1.0 / 16.0, 1.0).unwrap();
        let l = build_lattice(&p).unwrap();
        let exact = l.min_separation_exact();
        assert!(exact >= p.h - 1e-12);
        assert_eq!(l.min_separation_within(p.h * 1.01), exact);
    }

    #[test]
    fn sphere_lattice_is_separated() {
        let p = ModelParams::new(3, 0.125, 1.0).unwrap();
        let l = build_lattice(&p).unwrap();
        assert!(l.len() <= 4096);
        assert!(l.min_separation_exact() >= p.h - 1e-12);
        for r in norms(&l) {
            assert!((1.0 - 0.125 - 1e-12..=1.0 + 0.125 + 1e-12).contains(&r));
        }
        let ratio = l.count_ratio();
        assert!(
            (COUNT_BAND_3D.0..=COUNT_BAND_3D.1).contains(&ratio),
            "ratio {ratio}"
        );
    }

    #[test]
    fn higher_dimensions_are_rejected() {
        let p = ModelParams::new(4, 0.25, 1.0).unwrap();
        assert!(build_lattice(&p).is_err());
    }
}
