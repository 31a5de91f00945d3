//! Six-pool soil-carbon dynamics.
//!
//! Pools are, in order, decomposable plant material (D), resistant plant
//! material (R), fast (F) and slow (S) microbial biomass, humus (H) and
//! inert organic matter (I). Stocks are Mg C ha⁻¹, time is in months and
//! decay rates are annual, so every exponent carries a `/12`.

mod dynamics;
mod flux;
mod observe;
mod params;
mod pools;
mod propagator;

use thiserror::Error;

pub use dynamics::{
    decayed_masses, simulate_deterministic, simulate_stochastic, step_deterministic, step_stochastic, StepOutput,
};
pub(crate) use dynamics::{decay_factors, mean_from_factors};
pub use flux::{flux_plot, flux_treatment};
pub use observe::{fraction, observe_map, Fractions, MeasurementType};
pub(crate) use params::co2_solid_ratio;
pub use params::{derive_routing, DecayRates, DerivedRouting, Forcing, ModelParams, NoiseParams, PrimaryRouting};
pub use pools::{Pool, PoolState, DECAYING_POOLS};
pub use propagator::{build_propagator, Propagator};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unknown treatment `{0}`")]
    UnknownTreatment(String),
    #[error("manure routing weights are all zero")]
    ZeroManureWeights,
    #[error("deterministic mean of pool {pool} is {value}, cannot apply log-scale noise")]
    DegenerateMean { pool: Pool, value: f64 },
    #[error("flux horizon must be at least one month")]
    ZeroHorizon,
    #[error("no plots to aggregate")]
    EmptyFluxSet,
    #[error("plot areas must be positive, got {0}")]
    NonPositiveArea(f64),
}
