//! Rates, distances, slope fits and tail estimates shared by the studies.

pub mod fit;
pub mod rate;
pub mod wasserstein;

pub use fit::{empirical_tail, loglog_slope, wilson_interval, SlopeFit, TailEstimate};
pub use rate::{rate_regime, theoretical_rate, RateQuery, RateRegime};
pub use wasserstein::{
    wasserstein2_1d, wasserstein2_exact_small, wasserstein2_sorted, wasserstein2_gaussians, wasserstein2_to_gaussian, GaussianW2,
    EXACT_LIMIT, GAUSSIAN_CELLS,
};
