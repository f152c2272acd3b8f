//! File formats, CLI and experiment harness around `confound-core`.
//!
//! - [`formats`]: MDP/policy JSON, JSONL datasets with sealed sidecars, CSV.
//! - [`config`]: TOML experiment configs.
//! - [`harness`]: per-seed pipelines, summaries, run comparison.
//! - [`cli`]: the `confound-lab` subcommands.

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod harness;

pub use error::{LabError, Result};
