use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("integer overflow: {0}")]
    Overflow(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("infeasible calibration: {0}")]
    Infeasible(String),
    #[error("derivative order {order} exceeds cap {cap}")]
    CapExceeded { order: usize, cap: usize },
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("memory budget exceeded: need {need} bytes, budget {budget} bytes")]
    MemoryBudget { need: u64, budget: u64 },
    #[error("tolerance failure: {0}")]
    Tolerance(String),
    #[error("time {t} outside window [{lo}, {hi}]")]
    OutOfWindow { t: f64, lo: f64, hi: f64 },
    #[error("CFL violation: dt = {dt} exceeds limit {limit}")]
    Cfl { dt: f64, limit: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("quadrature failure: {0}")]
    Quadrature(String),
    #[error("poor fit quality: R^2 = {0}")]
    FitQuality(f64),
    #[error("kappa = {kappa} is not permissible")]
    NotPermissible { kappa: f64 },
    #[error("condition eps^2 <= kappa*tau/2 violated: {0}")]
    Condition(String),
    #[error("time grid mismatch: {0}")]
    TimeGrid(String),
    #[error("time {t} within {dist} of a window seam")]
    Seam { t: f64, dist: f64 },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
