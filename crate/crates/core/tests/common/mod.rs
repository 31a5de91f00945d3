//! Shared fixtures for integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use soilcarbon::io::{Experiment, ExperimentConfig, FixedTruth, PlotRecord, SamplerSettings, SyntheticSettings};
use soilcarbon::model::{DecayRates, Forcing, NoiseParams, PoolState, PrimaryRouting};
use soilcarbon::priors::Scenario;
use soilcarbon::ModelParams;

pub const TREATMENT: &str = "T1";
pub const ALPHA_TRUE: f64 = 0.8;

/// Monthly forcing with a seasonal cycle; `shift` varies it between plots.
pub fn seasonal_forcing(months: usize, shift: f64) -> Vec<Forcing<f64>> {
    (0..months)
        .map(|t| {
            let phase = 2.0 * std::f64::consts::PI * (t as f64 + shift) / 12.0;
            let p = (0.2 + 0.15 * phase.sin()).max(0.0);
            let m = if t % 12 == 3 { 0.3 } else { 0.0 };
            Forcing::monthly(p, m, 0.7 + 0.3 * phase.cos())
        })
        .collect()
}

/// Generating values near the prior centres, with `α = 0.8`.
pub fn true_params(treatments: &[&str]) -> ModelParams {
    let alpha = treatments.iter().map(|t| (t.to_string(), ALPHA_TRUE)).collect();
    ModelParams {
        rates: DecayRates { kappa: [10.0, 0.07, 0.66, 0.66, 0.02], alpha },
        routing: PrimaryRouting {
            p_xf: 0.46,
            p_hs: 0.46,
            p_clay: 0.16,
            r_dpm_rpm: 1.44,
            pi_m: [0.49, 0.49, 0.005, 0.005, 0.02],
        },
        noise: NoiseParams {
            sigma2_process: [0.318 / 402.4; 5],
            sigma2_meas: [0.053 / 9.5, 0.039 / 9.5, 0.290 / 9.5],
        },
    }
}

pub fn true_initial() -> PoolState<f64> {
    PoolState::new(0.05, 5.0, 0.005, 0.005, 40.0, 6.0)
}

/// Experiment of `n_plots` plots under one treatment, observed at `months`.
pub fn synthetic_experiment(n_plots: usize, horizon: usize, months: Vec<usize>) -> Experiment {
    let plots: Vec<PlotRecord> = (0..n_plots)
        .map(|k| PlotRecord {
            id: format!("p{}", k + 1),
            treatment: TREATMENT.into(),
            area: 1.0,
            x: k as f64,
            y: 0.0,
        })
        .collect();
    let forcing: BTreeMap<String, Vec<Forcing<f64>>> =
        plots.iter().enumerate().map(|(k, p)| (p.id.clone(), seasonal_forcing(horizon, k as f64))).collect();
    let initial = plots.iter().map(|p| (p.id.clone(), true_initial())).collect();
    let config = ExperimentConfig {
        plots: PathBuf::from("plots.csv"),
        forcing: PathBuf::from("forcing.csv"),
        observations: Some(PathBuf::from("observations.csv")),
        treatments: None,
        scenario: Scenario::N,
        priors: Vec::new(),
        sampler: SamplerSettings::default(),
        seed: 1,
        dt: 1.0,
        synthetic: SyntheticSettings {
            observation_months: Some(months),
            truth: Some(FixedTruth { params: true_params(&[TREATMENT]), initial }),
        },
    };
    Experiment::from_parts(config, plots, forcing, Vec::new()).unwrap()
}
