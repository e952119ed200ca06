//! Generic particle and McKean–Vlasov FBSDE solvers for coefficient bundles.

pub mod bundle;
pub mod hamiltonian;
pub mod mkv;
pub mod particle;
pub mod regression;
pub mod registry;
pub mod residual;

pub use bundle::{component_means, CoefficientBundle, Dims, Law, LawMeans};
pub use hamiltonian::{minimize_hamiltonian, Admissible, HamiltonianBundle, Minimizer};
pub use mkv::{solve_mkv_fbsde, solve_mkv_fbsde_from, FlowSettings, MkvSolution, LAW_REPLICATION};
pub use particle::{solve_particle_fbsde, solve_particle_fbsde_rep, solve_particles, LawFlow, LawSource, ParticleCloud, PicardSettings, Shadow, SolveStart};
pub use regression::{fit, fit_martingale, Basis, LinearFit, MartingaleFit};
pub use registry::{bundle_by_name, LqBundleKind, LqParticleBundle, ScalarFnBundle, TanhBundle, TanhVariant, BUNDLE_NAMES};
pub use residual::{fbsde_residual, FbsdeResidual};
