//! Scenario files, the refinement driver, the experiment registry and
//! table output for the `obstacle-lab` binary.

pub mod driver;
pub mod error;
pub mod experiments;
pub mod expr;
pub mod scenario;
pub mod sets;
pub mod table;

pub use error::{HarnessError, Result};
pub use experiments::{run_experiment, REGISTRY};
pub use scenario::{Overrides, Scenario, ScenarioFile};
pub use table::{ConvergenceTable, Format};
