use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("density requested at z = 0")]
    ZeroPoint,
    #[error("family variant `{0}` has no density")]
    NoDensity(&'static str),
    #[error("quadrature diverges near the origin: local order {order:.4} >= 2")]
    QuadratureDivergence { order: f64 },
    #[error("tail mass diverges: far-field decay order {order:.4} <= 0")]
    TailDivergence { order: f64 },
    #[error("grid too coarse: relative cell error {relative_error:.3e} exceeds {tolerance:.3e}")]
    GridTooCoarse { relative_error: f64, tolerance: f64 },
    #[error("jump out of bounds at z = {z:?}: |j|/|z| = {ratio:.6} not in [{c0}, {c1}]")]
    JumpOutOfBounds { z: Vec<f64>, ratio: f64, c0: f64, c1: f64 },
    #[error("measures are not discretized on the same grid")]
    GridMismatch,
    #[error("too many atoms for the exact transport solver: {atoms} > {limit}")]
    TooManyAtoms { atoms: usize, limit: usize },
    #[error("coupling is not admissible")]
    NotAdmissible,
    #[error("family is not of Levy-Ito type")]
    NotLevyIto,
    #[error("function has no declared far-field extension")]
    MissingFarField,
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("time step {dt:.3e} exceeds the monotonicity bound {bound:.3e}")]
    CflViolation { dt: f64, bound: f64 },
    #[error("certification failed: {0}")]
    CertificationFailed(String),
    #[error("ordering violated at node {node}: {lower} > {upper}")]
    OrderingViolation { node: usize, lower: f64, upper: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("expression error: {0}")]
    Expression(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("transport cost overflow: scaled costs exceed the integer range")]
    CostOverflow,
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
