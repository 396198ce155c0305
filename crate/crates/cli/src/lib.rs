//! Batch front-end for the spacelike-graph experiments: JSON configs in,
//! `report.json` and CSV tables out.

pub mod config;
pub mod models;
pub mod report;
pub mod schema;
pub mod suites;

pub use config::{ConfigError, RunConfig, Suite, Tolerances};
pub use report::{run, write_outputs, RunReport};
