//! Cell-level discrete-event simulator of ATM ABR explicit-rate congestion
//! control, with conventional and virtual source / virtual destination
//! (VS/VD) switches.

pub mod config;
pub mod endsystems;
pub mod engine;
pub mod erica;
pub mod error;
pub mod output;
pub mod protocol;
pub mod scenarios;
pub mod sim;
pub mod switch;
pub mod time;

pub use config::{parse_config, RunSpec};
pub use error::{ConfigError, OutputError, ProtocolError, ScenarioError, SimError};
pub use scenarios::{build, build_with, Scenario, ScenarioOverrides, SCENARIO_NAMES};
pub use sim::{run, SimOutput, SimParams, VsInitialAcr};
pub use switch::{SwitchArch, VsVdOptions};
pub use time::SimTime;
