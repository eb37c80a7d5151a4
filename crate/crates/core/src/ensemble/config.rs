use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::lattice::{build_lattice, MomentumLattice};
use crate::model::params::ModelParams;
use crate::xray::{ExponentTable, DEFAULT_GRID_BUDGET};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    XrayPoint,
    XrayUniform,
    PhasePoint,
    PhaseSup,
    Traces,
    Tails,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::XrayPoint,
        ExperimentKind::XrayUniform,
        ExperimentKind::PhasePoint,
        ExperimentKind::PhaseSup,
        ExperimentKind::Traces,
        ExperimentKind::Tails,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::XrayPoint => "xray-point",
            ExperimentKind::XrayUniform => "xray-uniform",
            ExperimentKind::PhasePoint => "phase-point",
            ExperimentKind::PhaseSup => "phase-sup",
            ExperimentKind::Traces => "traces",
            ExperimentKind::Tails => "tails",
        }
    }
}

/// How `mu` is chosen at each `h` of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MuRule {
    /// `params.mu` at every `h`.
    #[default]
    Fixed,
    /// `mu = h^{-epsilon}`.
    Large,
}

fn default_samples() -> usize {
    1000
}
fn default_seed() -> u64 {
    1
}
fn default_budget() -> u64 {
    DEFAULT_GRID_BUDGET as u64
}
fn default_m_exponent() -> f64 {
    0.05
}
fn default_m_factors() -> Vec<f64> {
    vec![1.0, 1.25, 1.5, 2.0, 3.0]
}
fn default_mus() -> Vec<f64> {
    vec![1.0, 2.0, 4.0, 8.0]
}
fn default_tail_points() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default)]
    pub kind: Option<ExperimentKind>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_budget")]
    pub grid_budget: u64,
    /// Values of `h`; empty means `params.h` alone.
    #[serde(default)]
    pub h_sweep: Vec<f64>,
    /// `m(h) = N^{-kappa(n) + m_exponent}`.
    #[serde(default = "default_m_exponent")]
    pub m_exponent: f64,
    /// Multiples of `m(h)` at which exception frequencies are reported.
    #[serde(default = "default_m_factors")]
    pub m_factors: Vec<f64>,
    #[serde(default)]
    pub mu_rule: MuRule,
    /// `mu` sweep of the trace report.
    #[serde(default = "default_mus")]
    pub mus: Vec<f64>,
    #[serde(default)]
    pub x_spacing: Option<f64>,
    #[serde(default)]
    pub xi_spacing: Option<f64>,
    #[serde(default = "default_tail_points")]
    pub tail_points: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults deserialize")
    }
}

/// A unit segment (X-ray experiments) or a phase-space centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSection {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub params: ModelParams,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub segment: Option<PointSection>,
    #[serde(default)]
    pub phase: Option<PointSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<LatticeSection>,
}

/// Explicit momenta replacing the shell construction, for hand-built
/// instances. No separation check is made.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    pub momenta: Vec<Vec<f64>>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::MissingInput {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.params
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        let e = &self.experiment;
        if e.samples == 0 {
            return Err(Error::Config("samples must be at least 1".into()));
        }
        for &h in &e.h_sweep {
            let mut p = self.params;
            p.h = h;
            p.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        // m(h) >= N^{-kappa + eps} needs eps > 0
        if e.m_exponent <= 0.0 {
            return Err(Error::Config("m_exponent must be positive".into()));
        }
        if e.m_factors.iter().any(|&f| f.is_nan() || f <= 0.0) {
            return Err(Error::Config("m_factors must be positive".into()));
        }
        if e.mus.iter().any(|&m| m.is_nan() || m < 1.0) {
            return Err(Error::Config("mus must be >= 1".into()));
        }
        if let Some(l) = &self.lattice {
            if l.momenta.is_empty() || l.momenta.iter().any(|m| m.len() != self.params.n) {
                return Err(Error::Config("lattice momenta must be nonempty and of dimension n".into()));
            }
        }
        for p in [&self.segment, &self.phase].into_iter().flatten() {
            if p.x.len() != self.params.n || p.xi.len() != self.params.n {
                return Err(Error::Config("point dimension does not match n".into()));
            }
        }
        Ok(())
    }

    /// `h` values of the sweep (the configured `h` if none).
    pub fn sweep(&self) -> Vec<f64> {
        if self.experiment.h_sweep.is_empty() {
            vec![self.params.h]
        } else {
            self.experiment.h_sweep.clone()
        }
    }

    /// Parameters at sweep value `h`, with `mu` from the rule.
    pub fn params_at(&self, h: f64) -> Result<ModelParams> {
        let mut p = self.params;
        p.h = h;
        if self.experiment.mu_rule == MuRule::Large {
            p.mu = p.large_mu();
        }
        p.validate()?;
        Ok(p)
    }

    /// Lattice at `params`: the configured momenta, or the shell construction.
    pub fn lattice(&self, params: &ModelParams) -> Result<MomentumLattice> {
        match &self.lattice {
            Some(l) => MomentumLattice::from_points(*params, l.momenta.clone()),
            None => build_lattice(params),
        }
    }

    /// Exception threshold `m(h) = N^{-kappa(n) + m_exponent}`.
    pub fn exception_threshold(&self, params: &ModelParams, count: usize) -> f64 {
        let kappa = ExponentTable::for_params(params).kappa_n;
        (count as f64).powf(-kappa + self.experiment.m_exponent)
    }

    /// SHA-256 of the canonical (sorted-key) JSON form.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let text = serde_json::to_string(&value).expect("value serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[params]
n = 2
h = 0.03125
beta = 1.0
alpha = 0.5

[experiment]
kind = "xray-point"
samples = 200
seed = 7
h_sweep = [0.0625, 0.03125]

[segment]
x = [-0.5, 0.1]
xi = [1.0, 0.0]
"#;

    #[test]
    fn parses_and_hashes_stably() {
        let c = ExperimentConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(c.experiment.kind, Some(ExperimentKind::XrayPoint));
        assert_eq!(c.params.mu, 1.0);
        assert_eq!(c.sweep(), vec![0.0625, 0.03125]);
        assert_eq!(c.hash(), ExperimentConfig::from_toml(SAMPLE).unwrap().hash());
        let mut d = c.clone();
        d.experiment.seed = 8;
        assert_ne!(c.hash(), d.hash());
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(
            ExperimentConfig::from_toml("[params]\nn = 2\nh = 2.0\nbeta = 1.0\n"),
            Err(Error::Config(_))
        ));
        assert!(ExperimentConfig::from_toml("[params]\nn = 2\nh = 0.1\nbeta = 1.0\nbogus = 1\n").is_err());
        let zero = SAMPLE.replace("samples = 200", "samples = 0");
        assert!(ExperimentConfig::from_toml(&zero).is_err());
    }

    #[test]
    fn large_mu_rule() {
        let text = SAMPLE.replace("seed = 7", "seed = 7\nmu_rule = \"large\"");
        let c = ExperimentConfig::from_toml(&text).unwrap();
        let p = c.params_at(1.0 / 64.0).unwrap();
        assert!((p.mu - 64f64.powf(0.3)).abs() < 1e-12);
    }
}
