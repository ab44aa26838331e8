//! Experiment driver for networked sequential social dilemmas: run
//! configuration, seeded training runs and sweeps, CSV/JSON persistence,
//! pairwise analysis and plot-data emission.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod logs;
pub mod report;

pub use config::RunConfig;
pub use error::CliError;
pub use report::RunReport;
