//! Linear-quadratic games solved exactly (up to ODE error) through affine
//! decoupling fields.

pub mod control;
pub mod cooperative;
pub mod mkv;
pub mod nplayer;
pub mod residual;
pub mod spec;

pub use control::{adjoint_stats, AdjointStats, CooperativeControlMap, EquilibriumControlMap};
pub use cooperative::{
    coefficient_identity_violation, social_driver_mkv, social_driver_nplayer, solve_cooperative_lq,
    solve_cooperative_lq_with, solve_nplayer_social_lq, solve_nplayer_social_lq_with,
};
pub use mkv::{solve_mkv_lq, solve_mkv_lq_with, MeanFieldProblem, MfgDecoupling};
pub use nplayer::{
    solve_nplayer_lq_dense, solve_nplayer_lq_dense_with, solve_nplayer_lq_symmetric, solve_nplayer_lq_symmetric_with,
    Encoding, GameKind, LinearFeedback, NPlayerDecoupling, SymmetricCoefficients, DEFAULT_DENSE_LIMIT,
};
pub use residual::{mkv_residual, nplayer_residual, LqResidualReport};
pub use spec::{price_impact_spec, LqSpec, PriceImpact};
