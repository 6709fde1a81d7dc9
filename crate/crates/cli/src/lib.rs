//! Experiment orchestration for the context-gated spiking network library:
//! run configuration, seeded execution with manifested artifacts, sweeps,
//! and canned reproduction pipelines.

pub mod config;
pub mod manifest;
pub mod reproduce;
pub mod runner;
pub mod sweep;

pub use config::{CliError, Method, Model, Neuron, RunConfig};
pub use manifest::RunManifest;
pub use runner::{execute, run, ExecOutcome};
