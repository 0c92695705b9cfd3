//! Experiment grid runner, result store, reports and command-line front end.

pub mod cli;
pub mod config;
pub mod error;
pub mod grid;
pub mod reference;
pub mod report;
pub mod store;

pub use config::{DataConfig, ExperimentGrid, PretrainMode};
pub use error::RunnerError;
pub use grid::{run_grid, CellFailure, GridSummary, RunOptions};
pub use report::{build_report, emit_report, render, Report, ReportFormat, ReportOptions};
pub use store::{load_store, CellKey, ResultRecord, Runner};
