use rand_chacha::ChaCha8Rng;

use crate::model::{step_deterministic, DecayRates, NoiseParams, PoolState, PrimaryRouting};
use crate::ModelParams;
use crate::priors::PriorTable;

use super::data::{LatentTrajectory, PlotData};
use super::nuts::{sample_chains, ChainDraws, LogDensity, SamplerConfig};
use super::posterior::SoilPosterior;
use super::InferenceError;

const INIT_ATTEMPTS: usize = 100;

fn draw_start(post: &SoilPosterior, priors: &PriorTable, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
    let l = post.layout();
    let draw = |j: usize, rng: &mut ChaCha8Rng| l.globals[j].prior.sample(rng);
    let kappa = std::array::from_fn(|k| draw(k, rng));
    let alpha = priors
        .log_alpha
        .iter()
        .map(|(t, p)| (t.clone(), p.sample(rng).exp()))
        .collect();
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
    let params = ModelParams { rates: DecayRates { kappa, alpha }, routing, noise };
    let derived = crate::model::derive_routing(&params.routing).ok()?;

    let mut trajs = Vec::with_capacity(l.plot_ids.len());
    for (k, plot) in post.plots().enumerate() {
        let x0: [f64; 6] = std::array::from_fn(|p| post.plot_initial_priors(k)[p].sample(rng));
        let mut states = vec![PoolState::from_array(x0)];
        for f in &plot.forcing {
            let last = states[states.len() - 1];
            states.push(step_deterministic(&last, &params.rates, &derived, &plot.treatment, f).ok()?.next);
        }
        trajs.push(LatentTrajectory { states });
    }
    let u = post.unconstrain(&params, &trajs).ok()?;
    let mut grad = vec![0.0; u.len()];
    let lp = post.log_density_and_gradient(&u, &mut grad);
    (lp.is_finite() && u.iter().all(|v| v.is_finite())).then_some(u)
}

/// Starting point from prior draws, with latent stocks following the
/// deterministic dynamics from the drawn initial state. Retries a bounded
/// number of times until the posterior is finite.
pub fn initial_point(
    post: &SoilPosterior,
    priors: &PriorTable,
    chain: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, InferenceError> {
    (0..INIT_ATTEMPTS)
        .find_map(|_| draw_start(post, priors, rng))
        .ok_or(InferenceError::InitFailed { chain, attempts: INIT_ATTEMPTS })
}

/// Samples the joint posterior of all plots with NUTS.
///
/// Chain `c` uses stream `c` of a ChaCha generator seeded by
/// `config.seed`, so identical inputs give identical draws regardless of
/// the worker count.
pub fn run_hmc(data: &[PlotData], priors: &PriorTable, config: &SamplerConfig) -> Result<Vec<ChainDraws>, InferenceError> {
    config.validate()?;
    let post = SoilPosterior::new(data.to_vec(), priors)?;
    // Plot order inside the posterior is canonical; the prior table rows
    // were carried along, so sample initial states from the reordered rows.
    sample_chains(&post, config, |chain, rng| initial_point(&post, priors, chain, rng))
}
