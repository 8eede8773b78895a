//! Experiment driver: configuration, seeded batches and CSV output.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

pub use config::{parse_seeds, HarnessConfig};
pub use error::HarnessError;
pub use experiments::{run_experiment, Experiment, ExperimentOutput, ExperimentSpec, Row};
