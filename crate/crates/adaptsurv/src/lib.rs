//! Experiment harness for the adaptive surveillance engine.
//!
//! Reads TOML experiment configurations, runs replicate trajectories in
//! parallel with deterministic per-replicate seeds, audits engine invariants
//! and writes the CSV/JSON outputs consumed by downstream plotting.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod export;
pub mod validate;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
pub use experiment::{run_cell, CellResult, StrategyRuns};
