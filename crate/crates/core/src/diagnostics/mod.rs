//! Convergence diagnostics, posterior summaries, flux posteriors and the
//! spatial trend-surface diagnostic.

mod flux;
mod rhat;
mod summary;
mod trend;

use thiserror::Error;

pub use flux::{flux_draws, flux_posterior};
pub use rhat::{rhat, rhat_table, RhatEntry, RHAT_THRESHOLD};
pub use summary::{quantile, summarize, summarize_values, summarize_with, SummaryRow};
pub use trend::{trend_surface_diagnostic, ResidualPair, TrendFit, TrendSample, TrendSurface};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("need at least two chains, got {0}")]
    TooFewChains(usize),
    #[error("chains must have equal length")]
    UnequalLengths,
    #[error("chains need at least two draws, got {0}")]
    TooShort(usize),
    #[error("R-hat is undefined: within-chain variance is zero")]
    ZeroWithinVariance,
    #[error("no draws to summarise")]
    Empty,
    #[error("no quantity named `{0}` in the draws")]
    UnknownQuantity(String),
    #[error("trend surface for {kind} needs at least 5 locations, got {got}")]
    TooFewLocations { kind: String, got: usize },
    #[error("trend-surface design for {0} is rank deficient (collinear coordinates)")]
    RankDeficient(String),
    #[error("trend-surface values must be positive, got {0}")]
    NonPositiveValue(f64),
}
