//! Declarative experiment runs that reduce Monte Carlo repetitions to CSV tables.

mod config;
mod output;
mod run;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{
    class_prior_grid, ConfigFile, ExperimentConfig, ExperimentKind, Grid, Model, OutputOptions, RuleSet, Settings,
    BNN_Q0_GRID, DEFAULT_OUTPUT_DIR, OUTPUT_DIR_ENV, REGRESSION_Q0_GRID,
};
pub use output::{format_value, render_csv, render_plot_data, summary, write_outputs, CSV_HEADER};
pub use run::{run_experiment, ExperimentOutcome, Row};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("run failed: {0}")]
    Failed(String),
}

impl ExperimentError {
    /// 1 for configuration problems, 2 for everything that went wrong while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 1,
            ExperimentError::Io { .. } | ExperimentError::Failed(_) => 2,
        }
    }
}
