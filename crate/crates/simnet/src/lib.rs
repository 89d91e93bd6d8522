//! Deterministic multi-agent harness around `witnet-core`: scenario files,
//! the epoch loop, metrics, snapshots and the demurrage table.

pub mod agents;
pub mod engine;
pub mod metrics;
pub mod scenario;
pub mod snapshot;
pub mod table;

pub use engine::{run, RunOutput, SimError, Simulation};
pub use scenario::{load_scenario, parse_scenario, Scenario, ScenarioError, Strategy};
