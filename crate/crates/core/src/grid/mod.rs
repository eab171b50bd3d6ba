//! Domain discretization and the monotone conservative operator.

mod domain;
mod function;
mod operator;
mod sparse;
pub mod text;

pub use domain::{DomainGrid, DomainSpec, NodeKind, ScalarFn, DENSITY_RADII};
pub use function::{truncate_scalar, ExtendedGridFunction, GridFunction};
pub use operator::{assemble, validate_monotone, AssembledOperator, CoefficientField, MonotonicityReport, TensorFn};
pub use sparse::CsrMatrix;

/// `T_k` applied nodewise.
pub fn truncate(v: &GridFunction, k: f64) -> crate::Result<GridFunction> {
    v.truncate(k)
}
