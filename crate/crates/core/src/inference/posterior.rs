use std::collections::BTreeMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{
    derive_routing, fraction, DecayRates, Forcing, MeasurementType, NoiseParams, PoolState, PrimaryRouting,
};
use crate::ModelParams;
use crate::priors::{Prior, PriorTable};

use super::data::{LatentTrajectory, PlotData};
use super::layout::Layout;
use super::nuts::LogDensity;
use super::InferenceError;

/// How latent stocks after month 0 are represented in the unconstrained
/// vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    /// Log-stocks `log X_t` directly.
    Centered,
    /// Standardised process innovations `η_t`, with
    /// `log X_{t+1} = log mean_t − σ²/2 + σ·η_{t+1}`. Decouples the latent
    /// path from the parameters when process noise is small relative to
    /// measurement noise.
    #[default]
    NonCentered,
}

/// Plots at or above this count are evaluated on the worker pool.
const PARALLEL_MIN_PLOTS: usize = 4;

#[inline]
fn normal_log_pdf(r: f64, var: f64) -> f64 {
    -0.5 * (2.0 * PI * var).ln() - r * r / (2.0 * var)
}

/// Log density of a trajectory's months `1..=T` under the lognormal
/// process model. Month 0 is left to the initial-state prior.
///
/// Returns −∞ when a deterministic mean is not positive or a decaying pool
/// is not positive.
pub fn log_process(traj: &LatentTrajectory, params: &ModelParams, forcing: &[Forcing<f64>], treatment: &str) -> f64 {
    let (Ok(k_eff), Ok(routing)) = (params.rates.effective(treatment), derive_routing(&params.routing)) else {
        return f64::NEG_INFINITY;
    };
    let s2 = &params.noise.sigma2_process;
    let mut lp = 0.0;
    for (t, f) in forcing.iter().enumerate().take(traj.horizon()) {
        let state = &traj.states[t];
        let next = traj.states[t + 1].to_array();
        let factors = crate::model::decay_factors(&k_eff, f);
        let (means, _, _) = crate::model::mean_from_factors(state, &factors, &routing, f);
        for k in 0..5 {
            if !(means[k] > 0.0) || !(next[k] > 0.0) {
                return f64::NEG_INFINITY;
            }
            let r = next[k].ln() - means[k].ln() + s2[k] / 2.0;
            lp += normal_log_pdf(r, s2[k]);
        }
    }
    lp
}

/// Log density of a plot's observations given its trajectory:
/// `log Z ~ N(log fraction − σ²/2, σ²)`, including the `−log Z` Jacobian.
pub fn log_data(plot: &PlotData, traj: &LatentTrajectory, sigma2_meas: &[f64; 3]) -> f64 {
    plot.observations
        .iter()
        .map(|obs| {
            let var = sigma2_meas[obs.kind.index()];
            let frac = fraction(&traj.states[obs.month], obs.kind);
            if !(frac > 0.0) {
                return f64::NEG_INFINITY;
            }
            let lz = obs.value.ln();
            normal_log_pdf(lz - frac.ln() + var / 2.0, var) - lz
        })
        .sum()
}

fn l_pi(l: &Layout) -> usize {
    l.pi()
}

const LOG_2PI: f64 = 1.837_877_066_409_345_5;

/// One deterministic step with the intermediates its adjoint needs.
struct Step {
    e: [f64; 5],
    big_u: f64,
    big_v: f64,
    means: [f64; 5],
}

/// `c` is `rate_mod · dt / 12`.
#[inline]
fn step_means(g: &Globals, k_eff: &[f64; 5], c: f64, f: &Forcing<f64>, x: &[f64; 5]) -> Step {
    let e: [f64; 5] = std::array::from_fn(|p| (-c * k_eff[p]).exp());
    let big_u = x[0] * (1.0 - e[0]) + x[1] * (1.0 - e[1]) + x[2] * (1.0 - e[2]) + x[3] * (1.0 - e[3]);
    let big_v = x[4] * (1.0 - e[4]);
    let means = [
        x[0] * e[0] + g.p_pd * f.p + g.p_m[0] * f.m,
        x[1] * e[1] + (1.0 - g.p_pd) * f.p + g.p_m[1] * f.m,
        x[2] * e[2] + g.p_uf * big_u + g.p_m[2] * f.m,
        x[3] * e[3] + g.p_vs * big_v + g.p_m[3] * f.m,
        x[4] * e[4] + g.p_uh * big_u + g.p_vh * big_v + g.p_m[4] * f.m,
    ];
    Step { e, big_u, big_v, means }
}

/// Pushes the adjoint of a step's means back to the log-stocks at the
/// start of the step, the effective rates and the routing fractions.
#[allow(clippy::too_many_arguments)]
#[inline]
fn backprop_step(
    g: &Globals,
    f: &Forcing<f64>,
    c: f64,
    x: &[f64; 5],
    step: &Step,
    g_mean: &[f64; 5],
    g_logx: &mut [f64],
    g_k_eff: &mut [f64; 5],
    adj: &mut PlotAdjoint,
) {
    let e = &step.e;
    let g_u = g_mean[2] * g.p_uf + g_mean[4] * g.p_uh;
    let g_v = g_mean[3] * g.p_vs + g_mean[4] * g.p_vh;
    for p in 0..5 {
        let g_out = if p < 4 { g_u } else { g_v };
        let g_x = g_mean[p] * e[p] + g_out * (1.0 - e[p]);
        g_logx[p] += g_x * x[p];
        let g_e = (g_mean[p] - g_out) * x[p];
        g_k_eff[p] -= g_e * e[p] * c;
    }
    adj.g_p_pd += (g_mean[0] - g_mean[1]) * f.p;
    for p in 0..5 {
        adj.g_p_m[p] += g_mean[p] * f.m;
    }
    adj.g_p_uf += g_mean[2] * step.big_u;
    adj.g_p_uh += g_mean[4] * step.big_u;
    adj.g_p_vs += g_mean[3] * step.big_v;
    adj.g_p_vh += g_mean[4] * step.big_v;
}

/// Constrained globals plus the intermediates the adjoint pass needs.
struct Globals {
    kappa: [f64; 5],
    alpha: Vec<f64>,
    r_dpm: f64,
    p_xf: f64,
    p_hs: f64,
    p_clay: f64,
    pi_sum: f64,
    retained: f64,
    p_pd: f64,
    p_m: [f64; 5],
    p_uf: f64,
    p_uh: f64,
    p_vs: f64,
    p_vh: f64,
    s2p: [f64; 5],
    log_2pi_s2p: [f64; 5],
    s2m: [f64; 3],
    log_2pi_s2m: [f64; 3],
}

/// Per-plot contribution to the gradient of shared quantities.
#[derive(Default, Clone, Copy)]
struct PlotAdjoint {
    value: f64,
    g_kappa: [f64; 5],
    g_log_alpha: f64,
    g_p_pd: f64,
    g_p_m: [f64; 5],
    g_p_uf: f64,
    g_p_uh: f64,
    g_p_vs: f64,
    g_p_vh: f64,
    g_s2p: [f64; 5],
    g_s2m: [f64; 3],
}

/// Per-plot data in canonical order, with precomputed constants.
#[derive(Debug, Clone)]
struct PlotModel {
    data: PlotData,
    treatment: usize,
    /// `rate_mod · dt / 12` per month.
    decay_scale: Vec<f64>,
    /// `(month, kind, log value)` per observation.
    obs: Vec<(usize, MeasurementType, f64)>,
    initial_priors: [Prior; 6],
}

/// Joint log-posterior of all plots' log-stock trajectories and the shared
/// parameters, on the unconstrained scale.
///
/// Plots are held in id order and their terms are summed in that order, so
/// the value does not depend on input order or on the number of workers.
#[derive(Debug, Clone)]
pub struct SoilPosterior {
    layout: Layout,
    plots: Vec<PlotModel>,
    parameterization: Parameterization,
}

impl SoilPosterior {
    /// `priors.initial[k]` belongs to `plots[k]` as supplied.
    pub fn new(plots: Vec<PlotData>, priors: &PriorTable) -> Result<Self, InferenceError> {
        if plots.is_empty() {
            return Err(InferenceError::EmptyData);
        }
        if priors.initial.len() != plots.len() {
            return Err(InferenceError::InvalidConfig(format!(
                "prior table has initial states for {} plots, data has {}",
                priors.initial.len(),
                plots.len()
            )));
        }
        for init in &priors.initial {
            if init.iter().any(|p| p.support().0 < 0.0) {
                return Err(InferenceError::InvalidConfig("initial-stock priors must have nonnegative support".into()));
            }
        }
        let mut paired: Vec<(PlotData, [Prior; 6])> = plots.into_iter().zip(priors.initial.iter().copied()).collect();
        paired.sort_by(|a, b| a.0.id.cmp(&b.0.id));
        if let Some(w) = paired.windows(2).find(|w| w[0].0.id == w[1].0.id) {
            return Err(InferenceError::InvalidConfig(format!("duplicate plot id `{}`", w[0].0.id)));
        }
        for (plot, _) in &paired {
            plot.validate()?;
        }
        let sorted: Vec<PlotData> = paired.iter().map(|(p, _)| p.clone()).collect();
        let layout = Layout::new(&sorted, priors)?;
        let plots = paired
            .into_iter()
            .map(|(data, initial_priors)| {
                let treatment = layout.treatments.iter().position(|t| *t == data.treatment).expect("checked by layout");
                let decay_scale = data.forcing.iter().map(|f| f.rate_mod * f.dt / 12.0).collect();
                let obs = data.observations.iter().map(|o| (o.month, o.kind, o.value.ln())).collect();
                PlotModel { data, treatment, decay_scale, obs, initial_priors }
            })
            .collect();
        Ok(Self { layout, plots, parameterization: Parameterization::default() })
    }

    pub fn with_parameterization(mut self, parameterization: Parameterization) -> Self {
        self.parameterization = parameterization;
        self
    }

    pub fn parameterization(&self) -> Parameterization {
        self.parameterization
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Plots in canonical (id) order.
    pub fn plots(&self) -> impl ExactSizeIterator<Item = &PlotData> {
        self.plots.iter().map(|p| &p.data)
    }

    pub fn plot_initial_priors(&self, plot: usize) -> &[Prior; 6] {
        &self.plots[plot].initial_priors
    }

    fn check_dim(&self, u: &[f64]) -> Result<(), InferenceError> {
        if u.len() != self.layout.dim {
            return Err(InferenceError::Dimension { expected: self.layout.dim, got: u.len() });
        }
        Ok(())
    }

    fn global(&self, u: &[f64], j: usize) -> f64 {
        self.layout.globals[j].transform.constrain(u[j])
    }

    /// Constrained parameters encoded in `u`.
    pub fn params(&self, u: &[f64]) -> Result<ModelParams, InferenceError> {
        self.check_dim(u)?;
        let l = &self.layout;
        let kappa = std::array::from_fn(|k| self.global(u, l.kappa() + k));
        let alpha: BTreeMap<String, f64> = l
            .treatments
            .iter()
            .enumerate()
            .map(|(j, t)| (t.clone(), self.global(u, l.log_alpha() + j).exp()))
            .collect();
        let routing = PrimaryRouting {
            p_xf: self.global(u, l.p_xf()),
            p_hs: self.global(u, l.p_hs()),
            p_clay: self.global(u, l.p_clay()),
            r_dpm_rpm: self.global(u, l.r_dpm()),
            pi_m: std::array::from_fn(|k| self.global(u, l.pi() + k)),
        };
        let noise = NoiseParams {
            sigma2_process: std::array::from_fn(|k| self.global(u, l.sigma2_process() + k)),
            sigma2_meas: std::array::from_fn(|k| self.global(u, l.sigma2_meas() + k)),
        };
        Ok(ModelParams { rates: DecayRates { kappa, alpha }, routing, noise })
    }

    /// Trajectories encoded in `u`, in canonical plot order.
    pub fn trajectories(&self, u: &[f64]) -> Result<Vec<LatentTrajectory>, InferenceError> {
        self.check_dim(u)?;
        let g = self.globals(u).ok_or_else(|| InferenceError::NonFinite { coordinate: "pi_M".into() })?;
        Ok((0..self.plots.len()).map(|k| self.trajectory(&g, u, k)).collect())
    }

    /// Log-stocks of D, R, F, S, H for months `0..=T`, flattened `[t·5 + pool]`.
    fn log_states(&self, g: &Globals, k: usize, block: &[f64]) -> Vec<f64> {
        let horizon = self.layout.plot_horizons[k];
        let n = (horizon + 1) * 5;
        match self.parameterization {
            Parameterization::Centered => block[..n].to_vec(),
            Parameterization::NonCentered => {
                let plot = &self.plots[k];
                let k_eff = g.kappa.map(|kx| kx * g.alpha[plot.treatment]);
                let sigma = g.s2p.map(f64::sqrt);
                let mut out = block[..n].to_vec();
                for t in 0..horizon {
                    let x: [f64; 5] = std::array::from_fn(|p| out[t * 5 + p].exp());
                    let step = step_means(g, &k_eff, plot.decay_scale[t], &plot.data.forcing[t], &x);
                    for p in 0..5 {
                        let eta = block[(t + 1) * 5 + p];
                        out[(t + 1) * 5 + p] = step.means[p].ln() - g.s2p[p] / 2.0 + sigma[p] * eta;
                    }
                }
                out
            }
        }
    }

    fn trajectory(&self, g: &Globals, u: &[f64], plot: usize) -> LatentTrajectory {
        let l = &self.layout;
        let off = l.plot_offsets[plot];
        let block = &u[off..off + super::layout::block_len(l.plot_horizons[plot])];
        let logs = self.log_states(g, plot, block);
        let i = u[l.inert_index(plot)].exp();
        let states = logs
            .chunks_exact(5)
            .map(|c| PoolState::new(c[0].exp(), c[1].exp(), c[2].exp(), c[3].exp(), c[4].exp(), i))
            .collect();
        LatentTrajectory { states }
    }

    /// Encodes parameters and canonical-order trajectories.
    pub fn unconstrain(&self, params: &ModelParams, trajs: &[LatentTrajectory]) -> Result<Vec<f64>, InferenceError> {
        let l = &self.layout;
        if trajs.len() != self.plots.len() {
            return Err(InferenceError::Dimension { expected: self.plots.len(), got: trajs.len() });
        }
        let mut u = vec![0.0; l.dim];
        let mut set = |j: usize, x: f64| u[j] = l.globals[j].transform.unconstrain(x);
        for k in 0..5 {
            set(l.kappa() + k, params.rates.kappa[k]);
            set(l.pi() + k, params.routing.pi_m[k]);
            set(l.sigma2_process() + k, params.noise.sigma2_process[k]);
        }
        for (j, t) in l.treatments.iter().enumerate() {
            let a = params
                .rates
                .alpha
                .get(t)
                .ok_or_else(|| InferenceError::UnknownTreatment(t.clone()))?;
            set(l.log_alpha() + j, a.ln());
        }
        set(l.p_xf(), params.routing.p_xf);
        set(l.p_hs(), params.routing.p_hs);
        set(l.p_clay(), params.routing.p_clay);
        set(l.r_dpm(), params.routing.r_dpm_rpm);
        for k in 0..3 {
            set(l.sigma2_meas() + k, params.noise.sigma2_meas[k]);
        }
        let routing = derive_routing(&params.routing).map_err(|e| InferenceError::InvalidConfig(e.to_string()))?;
        let s2 = &params.noise.sigma2_process;
        for (p, traj) in trajs.iter().enumerate() {
            if traj.horizon() != l.plot_horizons[p] {
                return Err(InferenceError::Dimension { expected: l.plot_horizons[p], got: traj.horizon() });
            }
            let plot = &self.plots[p].data;
            let k_eff = params.rates.effective(&plot.treatment).map_err(|e| InferenceError::InvalidConfig(e.to_string()))?;
            for (t, s) in traj.states.iter().enumerate() {
                let a = s.to_array();
                let means = match (self.parameterization, t) {
                    (Parameterization::NonCentered, t) if t > 0 => {
                        let f = &plot.forcing[t - 1];
                        let factors = crate::model::decay_factors(&k_eff, f);
                        Some(crate::model::mean_from_factors(&traj.states[t - 1], &factors, &routing, f).0)
                    }
                    _ => None,
                };
                for k in 0..5 {
                    u[l.state_index(p, t, k)] = match means {
                        Some(m) => (a[k].ln() - m[k].ln() + s2[k] / 2.0) / s2[k].sqrt(),
                        None => a[k].ln(),
                    };
                }
            }
            u[l.inert_index(p)] = traj.initial().i.ln();
        }
        Ok(u)
    }

    /// Constrained value of every coordinate, matching [`Layout::names`].
    pub fn constrain_into(&self, u: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let l = &self.layout;
        for (j, c) in l.globals.iter().enumerate() {
            let x = c.transform.constrain(u[j]);
            let is_alpha = (l.log_alpha()..l.log_alpha() + l.n_treatments()).contains(&j);
            out.push(if is_alpha { x.exp() } else { x });
        }
        match (self.parameterization, self.globals(u)) {
            (Parameterization::NonCentered, Some(g)) => {
                for k in 0..self.plots.len() {
                    let off = l.plot_offsets[k];
                    let block = &u[off..off + super::layout::block_len(l.plot_horizons[k])];
                    out.extend(self.log_states(&g, k, block).iter().map(|v| v.exp()));
                    out.push(block[block.len() - 1].exp());
                }
            }
            (Parameterization::NonCentered, None) => out.extend(std::iter::repeat(f64::NAN).take(l.dim - l.n_global())),
            (Parameterization::Centered, _) => out.extend(u[l.n_global()..].iter().map(|v| v.exp())),
        }
    }

    /// Log prior of the globals plus transform Jacobians.
    fn log_prior_globals(&self, u: &[f64]) -> f64 {
        self.layout
            .globals
            .iter()
            .zip(u)
            .map(|(c, &ui)| c.prior.log_pdf(c.transform.constrain(ui)) + c.transform.log_jacobian(ui))
            .sum()
    }

    fn log_prior_initial(&self, plot: usize, traj: &LatentTrajectory) -> f64 {
        let x0 = traj.initial().to_array();
        self.plots[plot]
            .initial_priors
            .iter()
            .zip(x0)
            .map(|(prior, x)| prior.log_pdf(x) + x.ln())
            .sum()
    }

    /// Log posterior assembled from [`log_process`] and [`log_data`].
    ///
    /// Slower than the fused gradient pass; kept as an independent route to
    /// the same value.
    pub fn log_posterior(&self, u: &[f64]) -> f64 {
        if u.len() != self.layout.dim || u.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let params = self.params(u).expect("dimension checked");
        let Some(g) = self.globals(u) else {
            return f64::NEG_INFINITY;
        };
        let prior = self.log_prior_globals(u);
        // Innovations map to log-stocks with Jacobian σ per month and pool.
        let log_sigma: f64 = params.noise.sigma2_process.iter().map(|v| 0.5 * v.ln()).sum();
        let term = |k: usize| {
            let plot = &self.plots[k];
            let traj = self.trajectory(&g, u, k);
            let jac = match self.parameterization {
                Parameterization::Centered => 0.0,
                Parameterization::NonCentered => plot.data.horizon() as f64 * log_sigma,
            };
            self.log_prior_initial(k, &traj)
                + log_process(&traj, &params, &plot.data.forcing, &plot.data.treatment)
                + log_data(&plot.data, &traj, &params.noise.sigma2_meas)
                + jac
        };
        let terms: Vec<f64> = if self.plots.len() >= PARALLEL_MIN_PLOTS {
            (0..self.plots.len()).into_par_iter().map(term).collect()
        } else {
            (0..self.plots.len()).map(term).collect()
        };
        let total = prior + terms.iter().fold(0.0, |acc, v| acc + v);
        if total.is_nan() {
            f64::NEG_INFINITY
        } else {
            total
        }
    }

    /// Like [`log_posterior`](Self::log_posterior) but names the first
    /// coordinate whose term is not finite.
    pub fn log_posterior_checked(&self, u: &[f64]) -> Result<f64, InferenceError> {
        self.check_dim(u)?;
        let names = self.layout.names();
        let flag = |j: usize| InferenceError::NonFinite { coordinate: names[j].clone() };
        if let Some(j) = u.iter().position(|v| !v.is_finite()) {
            return Err(flag(j));
        }
        for (j, c) in self.layout.globals.iter().enumerate() {
            if !(c.prior.log_pdf(c.transform.constrain(u[j])) + c.transform.log_jacobian(u[j])).is_finite() {
                return Err(flag(j));
            }
        }
        let params = self.params(u)?;
        let g = self.globals(u).ok_or_else(|| flag(l_pi(&self.layout)))?;
        for k in 0..self.plots.len() {
            let traj = self.trajectory(&g, u, k);
            let plot = &self.plots[k].data;
            if !self.log_prior_initial(k, &traj).is_finite() {
                return Err(flag(self.layout.state_index(k, 0, 0)));
            }
            for t in 1..traj.states.len() {
                let window = LatentTrajectory { states: traj.states[t - 1..=t].to_vec() };
                if !log_process(&window, &params, &plot.forcing[t - 1..t], &plot.treatment).is_finite() {
                    return Err(flag(self.layout.state_index(k, t, 0)));
                }
            }
            if !log_data(plot, &traj, &params.noise.sigma2_meas).is_finite() {
                return Err(flag(self.layout.inert_index(k)));
            }
        }
        Ok(self.log_posterior(u))
    }

    fn globals(&self, u: &[f64]) -> Option<Globals> {
        let l = &self.layout;
        let kappa = std::array::from_fn(|k| self.global(u, l.kappa() + k));
        let alpha = (0..l.n_treatments()).map(|j| self.global(u, l.log_alpha() + j).exp()).collect();
        let pi: [f64; 5] = std::array::from_fn(|k| self.global(u, l.pi() + k));
        let pi_sum: f64 = pi.iter().sum();
        if !(pi_sum > 0.0) {
            return None;
        }
        let (p_xf, p_hs, p_clay, r_dpm) =
            (self.global(u, l.p_xf()), self.global(u, l.p_hs()), self.global(u, l.p_clay()), self.global(u, l.r_dpm()));
        let c = crate::model::co2_solid_ratio(p_clay);
        let retained = 1.0 / (1.0 + c);
        let s2p: [f64; 5] = std::array::from_fn(|k| self.global(u, l.sigma2_process() + k));
        let s2m: [f64; 3] = std::array::from_fn(|k| self.global(u, l.sigma2_meas() + k));
        if s2p.iter().chain(&s2m).any(|v| !(*v > 0.0)) {
            return None;
        }
        Some(Globals {
            kappa,
            alpha,
            r_dpm,
            p_xf,
            p_hs,
            p_clay,
            pi_sum,
            retained,
            p_pd: r_dpm / (1.0 + r_dpm),
            p_m: pi.map(|w| w / pi_sum),
            p_uf: p_xf * retained,
            p_uh: (1.0 - p_xf) * retained,
            p_vs: p_hs * retained,
            p_vh: (1.0 - p_hs) * retained,
            s2p,
            log_2pi_s2p: s2p.map(|v| (2.0 * PI * v).ln()),
            s2m,
            log_2pi_s2m: s2m.map(|v| (2.0 * PI * v).ln()),
        })
    }

    /// Value and adjoint of one plot's terms; writes gradients into `grad`
    /// (the plot's block) and returns the shared-parameter adjoints.
    fn plot_adjoint(&self, g: &Globals, k: usize, u: &[f64], grad: &mut [f64]) -> PlotAdjoint {
        let plot = &self.plots[k];
        let horizon = self.layout.plot_horizons[k];
        let inert_slot = (horizon + 1) * 5;
        let mut adj = PlotAdjoint::default();
        grad.fill(0.0);
        let alpha = g.alpha[plot.treatment];
        let k_eff = g.kappa.map(|kx| kx * alpha);
        let mut g_k_eff = [0.0; 5];
        let centered = self.parameterization == Parameterization::Centered;
        let logx = if centered { u[..inert_slot].to_vec() } else { self.log_states(g, k, u) };
        // Adjoint of the log-stocks; equals `grad` for the centered form.
        let mut g_logx = vec![0.0; inert_slot];
        let mut lp = 0.0;

        // Initial-state priors on the stock scale plus the log Jacobian.
        for (p, prior) in plot.initial_priors.iter().enumerate() {
            let slot = if p < 5 { p } else { inert_slot };
            let x = u[slot].exp();
            lp += prior.log_pdf(x) + u[slot];
            grad[slot] += prior.dlog_pdf(x) * x + 1.0;
        }

        let log_i = u[inert_slot];
        let inert = log_i.exp();
        for &(month, kind, lz) in &plot.obs {
            let x: [f64; 5] = std::array::from_fn(|p| logx[month * 5 + p].exp());
            let frac = match kind {
                MeasurementType::Toc => x.iter().sum::<f64>() + inert,
                MeasurementType::Poc => x[0] + x[1] + x[2],
                MeasurementType::Roc => inert,
            };
            let j = kind.index();
            let s2 = g.s2m[j];
            let r = lz - frac.ln() + s2 / 2.0;
            lp += -0.5 * g.log_2pi_s2m[j] - r * r / (2.0 * s2) - lz;
            let g_frac = r / (s2 * frac);
            let mask = kind.mask();
            for p in 0..5 {
                if mask[p] {
                    g_logx[month * 5 + p] += g_frac * x[p];
                }
            }
            if mask[5] {
                grad[inert_slot] += g_frac * inert;
            }
            adj.g_s2m[j] += -0.5 / s2 - 0.5 * r / s2 + r * r / (2.0 * s2 * s2);
        }

        // Months in reverse so that the adjoint of month t+1 is complete
        // before it is pushed through the step from t.
        for t in (0..horizon).rev() {
            let f = &plot.data.forcing[t];
            let c = plot.decay_scale[t];
            let x: [f64; 5] = std::array::from_fn(|p| logx[t * 5 + p].exp());
            let step = step_means(g, &k_eff, c, f, &x);
            let mut g_mean = [0.0; 5];
            for p in 0..5 {
                let m = step.means[p];
                if !(m > 0.0) {
                    adj.value = f64::NEG_INFINITY;
                    return adj;
                }
                let s2 = g.s2p[p];
                let slot = (t + 1) * 5 + p;
                if centered {
                    let r = u[slot] - m.ln() + s2 / 2.0;
                    lp += -0.5 * g.log_2pi_s2p[p] - r * r / (2.0 * s2);
                    g_logx[slot] -= r / s2;
                    g_mean[p] = r / (s2 * m);
                    adj.g_s2p[p] += -0.5 / s2 - 0.5 * r / s2 + r * r / (2.0 * s2 * s2);
                } else {
                    let eta = u[slot];
                    let sigma = s2.sqrt();
                    lp += -0.5 * LOG_2PI - 0.5 * eta * eta;
                    let gl = g_logx[slot];
                    grad[slot] += sigma * gl - eta;
                    g_mean[p] = gl / m;
                    adj.g_s2p[p] += gl * (-0.5 + eta / (2.0 * sigma));
                }
            }
            backprop_step(g, f, c, &x, &step, &g_mean, &mut g_logx[t * 5..t * 5 + 5], &mut g_k_eff, &mut adj);
        }

        if centered {
            for (gv, gl) in grad.iter_mut().zip(&g_logx) {
                *gv += gl;
            }
        } else {
            for p in 0..5 {
                grad[p] += g_logx[p];
            }
        }

        for p in 0..5 {
            adj.g_kappa[p] = g_k_eff[p] * alpha;
            adj.g_log_alpha += g_k_eff[p] * k_eff[p];
        }
        adj.value = if lp.is_finite() { lp } else { f64::NEG_INFINITY };
        adj
    }

    /// Fused value and gradient.
    pub fn value_and_gradient(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        let l = &self.layout;
        grad.fill(0.0);
        if u.len() != l.dim || grad.len() != l.dim || u.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let Some(g) = self.globals(u) else {
            return f64::NEG_INFINITY;
        };
        let n_global = l.n_global();
        let (g_glob, mut rest) = grad.split_at_mut(n_global);
        let mut blocks: Vec<(usize, &mut [f64])> = Vec::with_capacity(self.plots.len());
        for k in 0..self.plots.len() {
            let len = super::layout::block_len(l.plot_horizons[k]);
            let (head, tail) = std::mem::take(&mut rest).split_at_mut(len);
            blocks.push((k, head));
            rest = tail;
        }
        let run = |(k, block): (usize, &mut [f64])| {
            let off = l.plot_offsets[k];
            self.plot_adjoint(&g, k, &u[off..off + block.len()], block)
        };
        let adjoints: Vec<PlotAdjoint> = if self.plots.len() >= PARALLEL_MIN_PLOTS {
            blocks.into_par_iter().map(run).collect()
        } else {
            blocks.into_iter().map(run).collect()
        };

        // Ordered reduction of the shared adjoints.
        let mut total = PlotAdjoint::default();
        let mut g_log_alpha = vec![0.0; l.n_treatments()];
        for (k, a) in adjoints.iter().enumerate() {
            total.value += a.value;
            for p in 0..5 {
                total.g_kappa[p] += a.g_kappa[p];
                total.g_p_m[p] += a.g_p_m[p];
                total.g_s2p[p] += a.g_s2p[p];
            }
            for j in 0..3 {
                total.g_s2m[j] += a.g_s2m[j];
            }
            total.g_p_pd += a.g_p_pd;
            total.g_p_uf += a.g_p_uf;
            total.g_p_uh += a.g_p_uh;
            total.g_p_vs += a.g_p_vs;
            total.g_p_vh += a.g_p_vh;
            g_log_alpha[self.plots[k].treatment] += a.g_log_alpha;
        }
        if !total.value.is_finite() {
            g_glob.fill(0.0);
            return f64::NEG_INFINITY;
        }

        // Adjoints with respect to each constrained global.
        let mut g_x = vec![0.0; n_global];
        for p in 0..5 {
            g_x[l.kappa() + p] = total.g_kappa[p];
            g_x[l.sigma2_process() + p] = total.g_s2p[p];
        }
        g_x[l.log_alpha()..l.log_alpha() + l.n_treatments()].copy_from_slice(&g_log_alpha);
        let dot: f64 = (0..5).map(|p| total.g_p_m[p] * g.p_m[p]).sum();
        for p in 0..5 {
            g_x[l.pi() + p] = (total.g_p_m[p] - dot) / g.pi_sum;
        }
        g_x[l.r_dpm()] = total.g_p_pd / ((1.0 + g.r_dpm) * (1.0 + g.r_dpm));
        g_x[l.p_xf()] = (total.g_p_uf - total.g_p_uh) * g.retained;
        g_x[l.p_hs()] = (total.g_p_vs - total.g_p_vh) * g.retained;
        let g_retained = total.g_p_uf * g.p_xf
            + total.g_p_uh * (1.0 - g.p_xf)
            + total.g_p_vs * g.p_hs
            + total.g_p_vh * (1.0 - g.p_hs);
        let dc_dclay = 1.67 * 1.6 * -7.86 * (-7.86 * g.p_clay).exp();
        g_x[l.p_clay()] = -g_retained * g.retained * g.retained * dc_dclay;
        for j in 0..3 {
            g_x[l.sigma2_meas() + j] = total.g_s2m[j];
        }

        let mut prior = 0.0;
        for (j, c) in l.globals.iter().enumerate() {
            let x = c.transform.constrain(u[j]);
            prior += c.prior.log_pdf(x) + c.transform.log_jacobian(u[j]);
            g_glob[j] = (g_x[j] + c.prior.dlog_pdf(x)) * c.transform.dx_du(u[j]) + c.transform.dlog_jacobian(u[j]);
        }
        let value = prior + total.value;
        if value.is_finite() && grad.iter().all(|v| v.is_finite()) {
            value
        } else {
            f64::NEG_INFINITY
        }
    }
}

impl LogDensity for SoilPosterior {
    fn dim(&self) -> usize {
        self.layout.dim
    }

    fn log_density_and_gradient(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        self.value_and_gradient(u, grad)
    }

    fn names(&self) -> Vec<String> {
        self.layout.names()
    }

    fn constrain(&self, u: &[f64], out: &mut Vec<f64>) {
        self.constrain_into(u, out)
    }
}
