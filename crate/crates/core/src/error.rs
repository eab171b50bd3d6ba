use thiserror::Error;

/// Errors raised by grid construction, assembly, measures and solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("domain has no interior nodes")]
    EmptyDomain,

    #[error("domain fails the exterior density check at node {node:?} (radius {radius}, exterior fraction {fraction:.4} <= alpha {alpha})")]
    Regularity {
        node: Vec<usize>,
        radius: f64,
        fraction: f64,
        alpha: f64,
    },

    #[error("ellipticity violated: {0}")]
    Ellipticity(String),

    #[error("non-monotone assembly: edge {from:?} -> {to:?} has off-diagonal weight {weight:e}")]
    Monotonicity {
        from: Vec<usize>,
        to: Vec<usize>,
        weight: f64,
    },

    #[error("atom at {location:?} lies outside the domain")]
    Placement { location: Vec<f64> },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("{method} did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence {
        method: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("infeasible obstacle problem: {0}")]
    Feasibility(String),

    #[error("operator is not symmetric; use the adjoint capacitary potential instead")]
    Symmetry,

    #[error("grid too coarse: {0}")]
    Resolution(String),

    #[error("malformed grid or operator text at line {line}: {message}")]
    Format { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
