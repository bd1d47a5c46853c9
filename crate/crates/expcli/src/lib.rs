//! Experiment driver library behind the `expcli` binary: manifests, seeded
//! sweep execution with resumable persistence, and plot-data emission.

pub mod error;
pub mod manifest;
pub mod record;
pub mod runner;

pub use error::CliError;
pub use manifest::{ExperimentKind, Manifest};
pub use record::{load, persist, ResultRecord};
pub use runner::{resume_experiment, run_experiment};
