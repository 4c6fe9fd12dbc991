//! Scenario-driven front end for the `qtraj-core` numerics: TOML scenarios
//! in, CSV/JSON artifacts and a run registry out.

// `!(x > 0.0)` style guards are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod registry;
pub mod report;
pub mod tasks;

use std::path::Path;

pub use config::{ScenarioConfig, TaskKind};
pub use error::{LabError, Result};
pub use registry::{Registry, RunRecord};

/// Runs one scenario and records it under `out_root`.
pub fn run_scenario(config: &ScenarioConfig, task: TaskKind, out_root: &Path) -> Result<RunRecord> {
    let started = registry::now_unix();
    let output = tasks::execute(config, task)?;
    let registry = Registry::open(out_root)?;
    let value = serde_json::to_value(config).expect("config serializes");
    registry.commit(&config.hash(), task.name(), value, &output.artifacts, output.summary, started)
}
