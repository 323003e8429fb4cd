//! Case files, control-schedule generation, experiment workflows and result
//! export for the `porflow` command-line tool.

pub mod config;
pub mod error;
pub mod export;
pub mod perm;
pub mod suite;
pub mod workflow;

pub use config::{load_config, parse_config, CaseConfig};
pub use error::{HarnessError, Result};
pub use suite::{gen_control_suite, ControlSuite, SweepConfig};
pub use workflow::Overrides;
