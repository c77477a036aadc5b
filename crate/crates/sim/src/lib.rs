//! Deterministic simulation harness: scripted scenarios over a virtual
//! clock, and exhaustive exploration of small conflicts.

pub mod fixtures;
pub mod interleave;
pub mod scenario;
pub mod sim;

pub use interleave::{exhaustive_interleave, ConflictFixture, FixtureError, InterleaveReport};
pub use scenario::{Action, DeliverySchedule, Scenario, ScenarioError, Step};
pub use sim::{run_scenario, run_scenario_with, ClientDiff, ConvergenceReport, HarnessTimeout, Link, SimOptions, Simulation};
