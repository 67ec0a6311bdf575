//! Scenario files, the built-in case library and the `olc-sim` commands.

pub mod cases;
pub mod commands;
pub mod error;
pub mod output;
pub mod scenario;

pub use error::{exit, CliError};
pub use scenario::{load_scenario, Overrides, Scenario, ScenarioFile};
