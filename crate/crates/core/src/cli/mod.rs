//! Experiment runner behind the `adiabatic-lab` binary.

pub mod config;
pub mod runner;

pub use config::{ExperimentConfig, ExperimentKind};
pub use runner::{model_listing, run, RunOutcome, RunOverrides, OUTPUT_ENV};
