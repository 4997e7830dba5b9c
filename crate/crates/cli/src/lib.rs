//! Scenario configuration, batch execution, and report files for the
//! agreement laboratory. The binary in `main.rs` is a thin argument parser
//! over this library.

pub mod batch;
pub mod report;
pub mod scenario;

pub use batch::{run_batch, BatchOutcome};
pub use report::{summary_json, write_reports, BatchReport};
pub use scenario::{Scenario, ScenarioError, SeedSpec};
