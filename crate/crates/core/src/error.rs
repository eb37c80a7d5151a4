use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the model, the statistics and the experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("cannot read {path}: {source}")]
    MissingInput {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("refusing to overwrite {0} (pass --force)")]
    WouldOverwrite(PathBuf),

    #[error("annulus admits no lattice point")]
    EmptyLattice,

    #[error("no modes in aperture")]
    EmptyAperture,

    #[error("{what} budget exceeded: {requested} > {budget}")]
    BudgetExceeded {
        what: &'static str,
        requested: u128,
        budget: u128,
    },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("gram matrix is indefinite: min eigenvalue {min_eigenvalue:e} vs trace {trace:e}")]
    Indefinite { min_eigenvalue: f64, trace: f64 },

    #[error("degenerate samples: {0}")]
    Degenerate(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::EmptyAperture
                | Error::Quadrature(_)
                | Error::Indefinite { .. }
                | Error::Degenerate(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
