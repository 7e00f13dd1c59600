//! Experiment harness: configuration parsing, deterministic field
//! construction, CSV output and the experiment drivers behind the `nflab`
//! binary.

pub mod config;
pub mod csv;
pub mod experiments;
pub mod fields;

pub use config::{ConfigError, RunConfig};
pub use experiments::ExperimentReport;
