//! Phase-space localization at scale `mu` from Planck scale: the localizer
//! symbol, the Gram matrix of localized plane waves, its spectrum and the
//! statistic `G = ||P u||_{L^2}`.

pub mod gram;
pub mod profile;
pub mod scan;
pub mod spectral;
pub mod symbol;

pub use gram::{build_gram, gram_entry, psi_inner, LocalizerGram, GRAM_BUDGET};
pub use profile::EnvelopeProfile;
pub use scan::{phase_grid, PhaseGrid, PhaseScanner};
pub use spectral::{
    exact_log_moment, exact_moments, spectral, trace_report, GramDiagonalization, SpectralData,
    TraceRow,
};
pub use symbol::{active_set, normalization_constant, LocalizerSymbol, PsiDescriptor};
