//! Ensembles over seeds and `h`-sweeps, with CSV/JSON artifacts and a
//! content-addressed manifest.

pub mod config;
pub mod output;
pub mod runner;
pub mod stats;

pub use config::{ExperimentConfig, ExperimentKind, LatticeSection, MuRule, PointSection};
pub use output::{verify_manifest, write_run, Artifact, Table, MANIFEST_NAME};
pub use runner::{run_all, run_experiment, ExperimentOutput};
pub use stats::{wilson_interval, EnsembleStats};
