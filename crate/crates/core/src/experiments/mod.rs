//! Studies: gaps between `N`-player systems and their limits,
//! concentration, cross-player adjoint decay and the master-equation gap.
//!
//! Every study is a pure function of its [`StudyConfig`]; replications run in
//! parallel on per-replication random streams and are reduced in order.

mod common;
pub mod concentration;
pub mod config;
mod coupled;
pub mod fbsde;
pub mod gap;
pub mod master;
pub mod offdiag;
pub mod report;

pub use concentration::concentration_study;
pub use config::{StudyConfig, StudyKind, DEFAULT_THRESHOLDS};
pub use fbsde::{explicit_scheme_decoupling, fbsde_study};
pub use gap::{cooperative_gap_study, nash_gap_study, price_impact_study};
pub use master::master_gap_study;
pub use offdiag::offdiag_study;
pub use report::{Check, NamedSlope, StudyReport};

use crate::error::Result;

/// Runs the study selected by `kind`.
pub fn run_study(kind: StudyKind, cfg: &StudyConfig) -> Result<StudyReport> {
    match kind {
        StudyKind::NashGap => nash_gap_study(cfg),
        StudyKind::Offdiag => offdiag_study(cfg),
        StudyKind::Concentration => concentration_study(cfg),
        StudyKind::CoopGap => cooperative_gap_study(cfg),
        StudyKind::MasterGap => master_gap_study(cfg),
        StudyKind::PriceImpact => price_impact_study(cfg),
        StudyKind::Fbsde => fbsde_study(cfg),
    }
}
