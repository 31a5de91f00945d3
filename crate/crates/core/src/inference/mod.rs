//! Joint posterior over latent log-pool trajectories and parameters, and a
//! multinomial no-U-turn sampler to explore it.

mod data;
mod layout;
mod nuts;
mod posterior;
mod run;
mod transform;

use thiserror::Error;

pub use data::{LatentTrajectory, Observation, PlotData};
pub use layout::{Coordinate, Layout};
pub use nuts::{sample_chains, ChainDraws, LogDensity, SamplerConfig, SamplerStats};
pub use posterior::{log_data, log_process, Parameterization, SoilPosterior};
pub use run::{initial_point, run_hmc};
pub use transform::Transform;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no plots to fit")]
    EmptyData,
    #[error("unknown treatment `{0}` has no modifier prior")]
    UnknownTreatment(String),
    #[error("posterior is not finite at coordinate `{coordinate}`")]
    NonFinite { coordinate: String },
    #[error("chain {chain}: no finite starting point after {attempts} prior draws")]
    InitFailed { chain: usize, attempts: usize },
    #[error("chain {chain}: step size search failed ({reason})")]
    StepSize { chain: usize, reason: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}
