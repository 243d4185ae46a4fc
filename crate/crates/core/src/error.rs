use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("metric is not positive definite at {at:?} (smallest eigenvalue {min_eigenvalue:e})")]
    DegenerateMetric { at: [f64; 4], min_eigenvalue: f64 },
    #[error("derivative order {requested} unavailable (backend provides {available})")]
    Capability { requested: usize, available: usize },
    #[error("point at distance {distance} from the chart center lies outside the validity radius {radius}")]
    Domain { distance: f64, radius: f64 },
    #[error("geodesic integration failed: {0}")]
    Integration(String),
    #[error("moment of order {0} is not supported (maximum 6)")]
    UnsupportedOrder(usize),
    #[error("right-hand side has kernel component {0:e}; L is not solvable")]
    Solvability(f64),
    #[error("surface geometry breakdown: {0}")]
    Geometry(String),
    #[error("kernel block is singular (condition number {condition:e})")]
    KernelObstruction { condition: f64 },
    #[error("newton iteration did not converge after {iterations} steps (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("recentering failed: {0}")]
    Recentering(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = core::result::Result<T, Error>;
