use thiserror::Error;

/// Errors raised by the model, the solvers and the simulation drivers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("argument outside its domain: {0}")]
    Domain(String),

    #[error("singular point: {0}")]
    Singularity(String),

    #[error("integration failed at t = {t}: step size fell below {h_min}")]
    StepFailure { t: f64, h_min: f64 },

    #[error("bracket [{lo}, {hi}] does not straddle a sign change")]
    BracketFailure { lo: f64, hi: f64 },

    #[error("linearisation has complex eigenvalues ({re} ± {im}i)")]
    ComplexEigenvalue { re: f64, im: f64 },

    #[error("Newton iteration diverged after {iterations} iterations (residual {residual:e})")]
    NewtonDivergence { iterations: usize, residual: f64 },

    #[error("Newton residual stalled at {residual:e} after {iterations} iterations")]
    ResidualStall { iterations: usize, residual: f64 },

    #[error("singular linear system at pivot {0}")]
    SingularMatrix(usize),

    #[error("shooting failed: {0}")]
    Shooting(String),

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("time step {dt} violates the stability limit {limit}")]
    Cfl { dt: f64, limit: f64 },

    #[error("non-finite value in field `{field}` at t = {t}")]
    NonFinite { field: &'static str, t: f64 },

    #[error("parameter regime mismatch: {0}")]
    RegimeMismatch(String),

    #[error("continuation failed: {0}")]
    Continuation(String),

    #[error("wave does not exist: {0}")]
    Nonexistence(String),
}

pub type Result<T> = std::result::Result<T, Error>;
