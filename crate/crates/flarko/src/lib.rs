//! Data loading, model access and experiment running around `flarko-core`.

pub mod config;
pub mod gateway;
pub mod load;
pub mod mock;
pub mod report;
pub mod runner;
pub mod synth;

pub use config::RunConfig;
pub use runner::{cmd_build_kg, cmd_evaluate, cmd_run, RunError};
