use thiserror::Error;

/// Errors raised by the solvers, metrics and studies.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: String,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("Riccati field left the magnitude bound {bound:e} at t = {time}")]
    RiccatiBlowup { time: f64, bound: f64 },
    #[error("ODE integration did not settle after {substeps} substeps per interval (last change {change:e})")]
    IntegrationNotConverged { substeps: usize, change: f64 },
    #[error("mean boundary-value problem is singular (pivot {pivot:e})")]
    BvpSingular { pivot: f64 },
    #[error("N = {n} exceeds the dense solver limit {limit}")]
    DenseLimitExceeded { n: usize, limit: usize },
    #[error("optimality system for the equilibrium controls is singular at t = {time}")]
    SingularOptimalitySystem { time: f64 },
    #[error("strong convexity in the control fails: effective R = {r_eff}")]
    NonConvex { r_eff: f64 },
    #[error("Hamiltonian minimization did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("non-finite input to `{0}`")]
    OutsideDomain(&'static str),
    #[error("Picard iteration diverged (changes {changes:?}); shorten the horizon T")]
    PicardDiverged { changes: Vec<f64> },
    #[error("Picard iteration did not reach tolerance in {iterations} iterations (last change {change:e})")]
    PicardNotConverged { iterations: usize, change: f64 },
    #[error("regression normal equations are rank-deficient at node {node}")]
    RegressionSingular { node: usize },
    #[error("measure-flow fixed point is not contracting (changes {changes:?})")]
    FlowNotContracting { changes: Vec<f64> },
    #[error("rate r_(N,M,k,p) is undefined for M = {m}, k = {k}, p = {p}")]
    UndefinedRegime { m: f64, k: f64, p: f64 },
    #[error("empty sample")]
    EmptySample,
    #[error("sample sizes {left} and {right} must match")]
    SizeMismatch { left: usize, right: usize },
    #[error("exact assignment limited to {limit} points, got {n}")]
    SizeLimit { n: usize, limit: usize },
    #[error("slope fit needs at least 4 positive points, got {0}")]
    TooFewPoints(usize),
    #[error("confidence half-width {half_width:e} exceeds 30% of the estimate {estimate:e} at N = {n}")]
    InsufficientReplications {
        n: usize,
        estimate: f64,
        half_width: f64,
    },
    #[error("unknown bundle `{0}`")]
    UnknownBundle(String),
    #[error("table format: {0}")]
    Table(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, value: f64, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            value,
            reason: reason.into(),
        }
    }

    /// True for errors caused by user input rather than a failing solve.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::InvalidConfig(_)
                | Error::UnknownBundle(_)
                | Error::DenseLimitExceeded { .. }
                | Error::UndefinedRegime { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
