//! Command-line front end.

pub mod commands;
pub mod config;
pub mod experiment;

pub use config::RunConfig;
pub use experiment::{run_experiment, run_sweep, Experiment, SweepParam, SweepSpec};
pub use commands::{exit_code, run, Cli, Command};
