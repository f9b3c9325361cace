//! Scenario runner for the weighted Yamabe flow simulator: preset and
//! file-based configuration, flow execution with trace/summary export,
//! classification and spectrum commands, and a brute-force verification
//! suite. The numerics live in `wyflow-core`; this crate is the `std` shell
//! around them (files, formats, process exit codes).

pub mod config;
pub mod error;
pub mod io;
pub mod scenario;

pub use config::{preset, resolve, Overrides, ScenarioConfig, PRESET_NAMES};
pub use error::{CliError, Result};
