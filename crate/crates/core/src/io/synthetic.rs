use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::inference::{LatentTrajectory, Observation};
use crate::model::{derive_routing, fraction, step_stochastic, DecayRates, MeasurementType, ModelError, NoiseParams, PoolState, PrimaryRouting};
use crate::priors::PriorTable;
use crate::ModelParams;

use super::config::Experiment;
use super::csvfmt::ObservationRow;
use super::DataError;

const MAX_RETRIES: usize = 100;

/// Generating values supplied instead of prior draws. Initial states are
/// keyed by plot id; plots without an entry draw theirs from the priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedTruth {
    pub params: ModelParams,
    #[serde(default)]
    pub initial: BTreeMap<String, PoolState<f64>>,
}

/// Everything used to generate a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub seed: u64,
    pub params: ModelParams,
    /// Trajectories for months `0..=T`, keyed by plot id.
    pub trajectories: BTreeMap<String, LatentTrajectory>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub observations: Vec<ObservationRow>,
    pub truth: SyntheticTruth,
}

fn draw_params(priors: &PriorTable, rng: &mut ChaCha8Rng) -> ModelParams {
    let kappa = std::array::from_fn(|k| priors.kappa[k].sample(rng));
    let alpha = priors.log_alpha.iter().map(|(t, p)| (t.clone(), p.sample(rng).exp())).collect();
    let pi_m = std::array::from_fn(|k| priors.pi_manure[k].sample(rng));
    let routing = PrimaryRouting {
        p_xf: priors.p_xf.sample(rng),
        p_hs: priors.p_hs.sample(rng),
        p_clay: priors.p_clay.sample(rng),
        r_dpm_rpm: priors.r_dpm_rpm.sample(rng),
        pi_m,
    };
    let noise = NoiseParams {
        sigma2_process: std::array::from_fn(|k| priors.sigma2_process[k].sample(rng)),
        sigma2_meas: std::array::from_fn(|k| priors.sigma2_meas[k].sample(rng)),
    };
    ModelParams { rates: DecayRates { kappa, alpha }, routing, noise }
}

fn check_params(p: &ModelParams) -> Result<(), DataError> {
    let bad = |e: ModelError| DataError::Generation(e.to_string());
    DecayRates::new(p.rates.kappa, p.rates.alpha.clone()).map_err(bad)?;
    derive_routing(&p.routing).map_err(bad)?;
    let vars = p.noise.sigma2_process.iter().chain(&p.noise.sigma2_meas);
    if vars.clone().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(DataError::Generation("variances must be finite and nonnegative".into()));
    }
    Ok(())
}

/// Simulates latent trajectories with lognormal process noise and records
/// lognormal measurements of every type at the configured months.
///
/// Variances may be zero, in which case the corresponding noise is off.
/// Plots are processed in plot-table order from one ChaCha stream, so the
/// same seed gives identical output.
pub fn generate_synthetic(exp: &Experiment, seed: u64) -> Result<SyntheticDataset, DataError> {
    let priors = exp.priors()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fixed = exp.config.synthetic.truth.as_ref();
    let params = match fixed {
        Some(t) => t.params.clone(),
        None => draw_params(&priors, &mut rng),
    };
    check_params(&params)?;
    let routing = derive_routing(&params.routing).map_err(|e| DataError::Generation(e.to_string()))?;

    let mut trajectories = BTreeMap::new();
    let mut observations = Vec::new();
    for (k, plot) in exp.data.iter().enumerate() {
        let horizon = plot.horizon();
        let months = exp.config.synthetic.observation_months.clone().unwrap_or_else(|| vec![0, horizon]);
        if let Some(m) = months.iter().find(|m| **m > horizon) {
            return Err(DataError::Generation(format!("observation month {m} beyond horizon {horizon} of `{}`", plot.id)));
        }
        let mut attempt = 0;
        let traj = loop {
            attempt += 1;
            let x0 = match fixed.and_then(|t| t.initial.get(&plot.id)) {
                Some(s) => *s,
                None => PoolState::from_array(std::array::from_fn(|p| priors.initial[k][p].sample(&mut rng))),
            };
            let mut states = vec![x0];
            let mut failure = None;
            for f in &plot.forcing {
                let eta: [f64; 5] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
                let last = states[states.len() - 1];
                match step_stochastic(&last, &params.rates, &routing, &params.noise, &plot.treatment, f, &eta) {
                    Ok(next) => states.push(next),
                    Err(e @ ModelError::DegenerateMean { .. }) => {
                        failure = Some(e);
                        break;
                    }
                    Err(e) => return Err(DataError::Generation(format!("plot `{}`: {e}", plot.id))),
                }
            }
            let traj = LatentTrajectory { states };
            match failure {
                None if traj.is_log_supported() => break traj,
                _ if attempt >= MAX_RETRIES => {
                    return Err(DataError::Generation(format!(
                        "plot `{}`: degenerate trajectory after {MAX_RETRIES} attempts",
                        plot.id
                    )))
                }
                _ => continue,
            }
        };
        for &month in &months {
            for kind in MeasurementType::ALL {
                let var = params.noise.sigma2_meas[kind.index()];
                let z: f64 = StandardNormal.sample(&mut rng);
                let value = fraction(&traj.states[month], kind) * (-var / 2.0 + var.sqrt() * z).exp();
                if !(value > 0.0) {
                    return Err(DataError::Generation(format!("plot `{}`: nonpositive {kind} at month {month}", plot.id)));
                }
                observations.push(ObservationRow { plot_id: plot.id.clone(), observation: Observation { month, kind, value } });
            }
        }
        trajectories.insert(plot.id.clone(), traj);
    }
    Ok(SyntheticDataset { observations, truth: SyntheticTruth { seed, params, trajectories } })
}
