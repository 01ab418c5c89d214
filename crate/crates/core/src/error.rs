use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("window sizing needs {needed} bytes, budget is {budget}")]
    Sizing { needed: u64, budget: u64 },
    #[error("tail tolerance {requested:e} unreachable at window cap {cap}; attained tail mass {attained:e}")]
    Truncation {
        requested: f64,
        attained: f64,
        cap: usize,
    },
    #[error("index {value} outside table horizon {max}")]
    Range { value: usize, max: usize },
    #[error("infeasible partition: {m} blocks but only {positive} indices with positive overlap")]
    InfeasiblePartition { m: usize, positive: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("second-moment recursion exceeded {limit:e} at n = {at} (L2 blow-up)")]
    L2BlowUp { at: usize, limit: f64 },
    #[error("surface does not cover requested support: missing {0}")]
    Coverage(String),
    #[error("quadrature did not converge: last two iterates {last:e}, {prev:e}")]
    QuadratureFailure { last: f64, prev: f64 },
    #[error("{count} nonpositive samples rejected")]
    NonPositive { count: usize },
    #[error("enumeration size {size} exceeds cap {cap}")]
    EnumerationCap { size: u64, cap: u64 },
    #[error("numerical instability: {0}")]
    Stability(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("bad kernel cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
