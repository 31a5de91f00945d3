//! Prior families, the default prior table and sensitivity scenarios.

mod dist;
mod ig_fit;
mod table;

use thiserror::Error;

pub use dist::{norm_cdf, norm_quantile, InverseGamma, LogNormal, Prior, TruncNormal};
pub use ig_fit::{fit_ig_to_multiplier_band, multiplier_tails, IgBandFit};
pub use table::{apply_scenario, default_priors, PriorEntry, PriorTable, Scenario};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PriorError {
    #[error("invalid distribution parameters: {0}")]
    InvalidParameters(String),
    #[error("no prior entry named `{0}`")]
    UnknownEntry(String),
    #[error("unknown scenario `{0}` (expected N, A or B)")]
    UnknownScenario(String),
    #[error("no inverse gamma matches the band: best tails {lower:.3e} / {upper:.3e} against target {target:.3e}")]
    InfeasibleBand { lower: f64, upper: f64, target: f64 },
    #[error("malformed prior table: {0}")]
    Malformed(String),
}
