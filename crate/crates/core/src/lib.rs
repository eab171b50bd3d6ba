//! Discrete elliptic obstacle problems with measure data.
//!
//! The crate is organised bottom-up:
//! - [`grid`]: masked uniform grids and the monotone flux assembly of
//!   `-div(A(x)∇u)` in measure form (values in, nodal masses out);
//! - [`measure`]: bounded measures as atoms, densities and divergence-form
//!   fluxes, with loads, Jordan parts and truncation regularization;
//! - [`elliptic`]: Krylov and dense solves, duality residuals, Sobolev norms;
//! - [`obstacle`]: projected SOR and primal-dual active-set solvers for the
//!   complementarity system, reactions and the inequality checks;
//! - [`capacity`]: capacitary potentials, capacities and example generators.

pub mod capacity;
pub mod elliptic;
pub mod error;
pub mod grid;
pub mod measure;
pub mod obstacle;

pub use error::{Error, Result};
