//! Numerical laboratory for N-player stochastic differential games that
//! interact through the joint law of states and controls, their mean-field
//! limits, and the propagation-of-chaos rates connecting the two.

pub mod chaos;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod lq;
pub mod metrics;
pub mod ode;
pub mod rng;
pub mod stats;
pub mod table;

pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use table::{Column, Table};

/// Version of the solver crate, recorded in every report's provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
