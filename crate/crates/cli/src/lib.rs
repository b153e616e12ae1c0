//! Experiment drivers: configuration, seeded instances and reports.

pub mod config;
pub mod instance;
pub mod run;

pub use config::{ConfigErrors, ConfigFile, Experiment, ExperimentConfig};
pub use instance::{generate_instance, Instance};
pub use run::{execute, run_experiment, Report, Row};
