//! Experiment configuration, CSV ingestion and export, and the synthetic
//! data generator.
//!
//! File formats (headers are fixed):
//!
//! - plots: `id,treatment,area,x,y`
//! - forcing: `plot_id,month,P,M,rate_mod`, months `1..=T` per plot; row
//!   `m` drives the step from month `m−1` to `m`
//! - observations: `plot_id,month,type,value` with `type` one of TOC, POC,
//!   ROC and `month` in `0..=T`
//! - draws: one CSV per chain, header of coordinate names
//!
//! Floats are written in shortest round-trip form, so write → read → write
//! is byte-identical.

mod config;
mod csvfmt;
mod draws;
mod report;
mod synthetic;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{load_experiment, Experiment, ExperimentConfig, SamplerSettings, SyntheticSettings};
pub use csvfmt::{
    read_forcing, read_observations, read_plots, write_forcing, write_observations, write_plots,
    write_trajectories, write_trend_table, ObservationRow, PlotRecord,
};
pub use draws::{export_draws, import_draws, read_draws_csv, write_draws_csv};
pub use report::{build_report, export_report, read_report, RunReport};
pub use synthetic::{generate_synthetic, FixedTruth, SyntheticDataset, SyntheticTruth};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("{path}: expected header `{expected}`, found `{found}`")]
    Header { path: PathBuf, expected: String, found: String },
    #[error("{path}:{line}: unknown plot id `{id}`")]
    UnknownPlot { path: PathBuf, line: u64, id: String },
    #[error("{path}:{line}: observation value must be positive, got {value}")]
    NonPositiveObservation { path: PathBuf, line: u64, value: f64 },
    #[error("{path}: plot `{plot}` has treatment `{treatment}` which is not in the configured treatment list")]
    UnknownTreatment { path: PathBuf, plot: String, treatment: String },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("synthetic generation failed: {0}")]
    Generation(String),
}

impl DataError {
    pub(crate) fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        DataError::Io { path: path.to_path_buf(), message: err.to_string() }
    }

    pub(crate) fn invalid(path: &Path, message: impl Into<String>) -> Self {
        DataError::Invalid { path: path.to_path_buf(), message: message.into() }
    }

    pub(crate) fn parse(path: &Path, line: u64, message: impl Into<String>) -> Self {
        DataError::Parse { path: path.to_path_buf(), line, message: message.into() }
    }
}
