use serde::{Deserialize, Serialize};

use crate::priors::{Prior, PriorTable};

use super::data::PlotData;
use super::transform::Transform;
use super::InferenceError;

const POOLS: [&str; 5] = ["D", "R", "F", "S", "H"];
const MEAS: [&str; 3] = ["TOC", "POC", "ROC"];

/// One global coordinate of the unconstrained vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coordinate {
    /// Name of the constrained quantity reported in draws.
    pub name: String,
    pub transform: Transform,
    pub prior: Prior,
}

/// Index map of the unconstrained vector.
///
/// Globals come first: κ (5), `log α` per treatment, π (5), `p_xf`,
/// `p_hs`, `p_clay`, `r_dpm_rpm`, process variances (5) and measurement
/// variances (TOC, POC, ROC). Each plot then owns a block of log-stocks
/// `[t·5 + pool]` for months `0..=T` followed by one `log I`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub treatments: Vec<String>,
    pub globals: Vec<Coordinate>,
    pub plot_ids: Vec<String>,
    pub plot_offsets: Vec<usize>,
    pub plot_horizons: Vec<usize>,
    pub dim: usize,
}

impl Layout {
    /// Builds the layout for plots already in canonical order.
    pub(crate) fn new(plots: &[PlotData], priors: &PriorTable) -> Result<Self, InferenceError> {
        let treatments: Vec<String> = priors.log_alpha.keys().cloned().collect();
        let mut globals = Vec::new();
        let mut push = |name: String, prior: &Prior| {
            globals.push(Coordinate { name, transform: Transform::for_prior(prior), prior: *prior });
        };
        for (n, p) in POOLS.iter().zip(&priors.kappa) {
            push(format!("kappa_{n}"), p);
        }
        for (t, p) in &priors.log_alpha {
            push(format!("alpha[{t}]"), p);
        }
        for (n, p) in POOLS.iter().zip(&priors.pi_manure) {
            push(format!("pi_M_{n}"), p);
        }
        push("p_xf".into(), &priors.p_xf);
        push("p_hs".into(), &priors.p_hs);
        push("p_clay".into(), &priors.p_clay);
        push("r_dpm_rpm".into(), &priors.r_dpm_rpm);
        for (n, p) in POOLS.iter().zip(&priors.sigma2_process) {
            push(format!("sigma2_{n}"), p);
        }
        for (n, p) in MEAS.iter().zip(&priors.sigma2_meas) {
            push(format!("sigma2_{n}"), p);
        }

        let mut offset = globals.len();
        let mut plot_offsets = Vec::with_capacity(plots.len());
        let mut plot_horizons = Vec::with_capacity(plots.len());
        for plot in plots {
            if !priors.log_alpha.contains_key(&plot.treatment) {
                return Err(InferenceError::UnknownTreatment(plot.treatment.clone()));
            }
            plot_offsets.push(offset);
            plot_horizons.push(plot.horizon());
            offset += block_len(plot.horizon());
        }
        Ok(Self {
            treatments,
            globals,
            plot_ids: plots.iter().map(|p| p.id.clone()).collect(),
            plot_offsets,
            plot_horizons,
            dim: offset,
        })
    }

    pub fn n_global(&self) -> usize {
        self.globals.len()
    }

    pub fn n_treatments(&self) -> usize {
        self.treatments.len()
    }

    pub(crate) fn kappa(&self) -> usize {
        0
    }

    pub(crate) fn log_alpha(&self) -> usize {
        5
    }

    pub(crate) fn pi(&self) -> usize {
        5 + self.n_treatments()
    }

    pub(crate) fn p_xf(&self) -> usize {
        10 + self.n_treatments()
    }

    pub(crate) fn p_hs(&self) -> usize {
        self.p_xf() + 1
    }

    pub(crate) fn p_clay(&self) -> usize {
        self.p_xf() + 2
    }

    pub(crate) fn r_dpm(&self) -> usize {
        self.p_xf() + 3
    }

    pub(crate) fn sigma2_process(&self) -> usize {
        self.p_xf() + 4
    }

    pub(crate) fn sigma2_meas(&self) -> usize {
        self.p_xf() + 9
    }

    /// Index of a plot's log-stock of `pool` (0..5) at month `t`.
    pub fn state_index(&self, plot: usize, t: usize, pool: usize) -> usize {
        self.plot_offsets[plot] + t * 5 + pool
    }

    /// Index of a plot's `log I`.
    pub fn inert_index(&self, plot: usize) -> usize {
        self.plot_offsets[plot] + (self.plot_horizons[plot] + 1) * 5
    }

    /// Names of the constrained quantities, one per coordinate.
    pub fn names(&self) -> Vec<String> {
        let mut out: Vec<String> = self.globals.iter().map(|c| c.name.clone()).collect();
        for (k, id) in self.plot_ids.iter().enumerate() {
            for t in 0..=self.plot_horizons[k] {
                for pool in POOLS {
                    out.push(format!("{pool}[{id}][{t}]"));
                }
            }
            out.push(format!("I[{id}]"));
        }
        out
    }
}

pub(crate) fn block_len(horizon: usize) -> usize {
    (horizon + 1) * 5 + 1
}
