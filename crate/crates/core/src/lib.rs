//! Stochastic six-pool soil-carbon dynamics with full Bayesian inference.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: RothC-style deterministic and lognormal-noise stochastic
//!   dynamics, derived routing algebra, the linear propagator form, the
//!   measurable-fraction map and flux estimators. Generic over the scalar.
//! - [`priors`]: truncated normal, inverse gamma and lognormal families, the
//!   default prior table, sensitivity scenarios and the multiplier-band
//!   inverse-gamma constructor.
//! - [`inference`]: unconstraining transforms, the joint log-posterior over
//!   latent log-pool trajectories and parameters with an analytic gradient,
//!   and a multinomial no-U-turn sampler.
//! - [`diagnostics`]: R-hat, posterior summaries, flux posteriors and the
//!   spatial trend-surface residual diagnostic.
//! - [`io`]: experiment configuration, CSV ingestion, synthetic data
//!   generation and draw/report export.

pub mod diagnostics;
pub mod error;
pub mod inference;
pub mod io;
pub mod model;
pub mod priors;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

/// Six-pool state in double precision.
pub type PoolState = model::PoolState<f64>;
/// Six-pool state in single precision.
pub type PoolStateF32 = model::PoolState<f32>;
pub type PrimaryRouting = model::PrimaryRouting<f64>;
pub type DerivedRouting = model::DerivedRouting<f64>;
pub type DecayRates = model::DecayRates<f64>;
pub type Forcing = model::Forcing<f64>;
pub type NoiseParams = model::NoiseParams<f64>;
pub type Propagator = model::Propagator<f64>;
pub type Fractions = model::Fractions<f64>;
pub type ModelParams = model::ModelParams<f64>;
