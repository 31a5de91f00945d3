use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::dist::{InverseGamma, Prior, TruncNormal};
use super::PriorError;

/// Sensitivity scenario applied to the base table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    /// Base priors.
    N,
    /// Decay-rate prior variances inflated fourfold.
    A,
    /// Process-variance priors widened to IG(102.4, 0.08), same mean.
    B,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::N, Scenario::A, Scenario::B];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::N => "N",
            Scenario::A => "A",
            Scenario::B => "B",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = PriorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "N" | "n" => Ok(Scenario::N),
            "A" | "a" => Ok(Scenario::A),
            "B" | "b" => Ok(Scenario::B),
            other => Err(PriorError::UnknownScenario(other.to_string())),
        }
    }
}

/// Names of the five decaying pools, used to build entry names.
pub(crate) const POOL_NAMES: [&str; 5] = ["D", "R", "F", "S", "H"];
/// Names of the six initial-state pools.
pub(crate) const INIT_NAMES: [&str; 6] = ["D", "R", "F", "S", "H", "I"];
pub(crate) const MEAS_NAMES: [&str; 3] = ["TOC", "POC", "ROC"];

/// Independent priors for every scalar parameter and every per-plot
/// initial stock.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorTable {
    /// κ for D, R, F, S, H.
    pub kappa: [Prior; 5],
    /// Prior on `log α_τ`, keyed by treatment label.
    pub log_alpha: BTreeMap<String, Prior>,
    /// π for manure to D, R, F, S, H.
    pub pi_manure: [Prior; 5],
    pub p_xf: Prior,
    pub p_hs: Prior,
    pub p_clay: Prior,
    pub r_dpm_rpm: Prior,
    /// Process variances for D, R, F, S, H.
    pub sigma2_process: [Prior; 5],
    /// Measurement variances for TOC, POC, ROC.
    pub sigma2_meas: [Prior; 3],
    /// Initial stocks D, R, F, S, H, I per plot, in plot order.
    pub initial: Vec<[Prior; 6]>,
}

/// One named entry of a serialised table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorEntry {
    pub name: String,
    #[serde(flatten)]
    pub prior: Prior,
}

fn tn(mu: f64, sigma: f64, lo: f64, hi: f64) -> Prior {
    TruncNormal::new(mu, sigma, lo, hi).expect("table constants are valid").into()
}

fn ig(shape: f64, scale: f64) -> Prior {
    InverseGamma::new(shape, scale).expect("table constants are valid").into()
}

/// The base parameter model for `n_plots` plots and the given treatments.
pub fn default_priors<S: AsRef<str>>(n_plots: usize, treatments: &[S]) -> PriorTable {
    let inf = f64::INFINITY;
    let process = ig(403.4, 0.318);
    let initial = [
        tn(0.0, 0.1, 0.0, inf),
        tn(0.0, 100.0, 0.0, inf),
        tn(0.0, 0.01, 0.0, inf),
        tn(0.0, 0.01, 0.0, inf),
        tn(0.0, 100.0, 0.0, inf),
        tn(0.0, 10.0, 0.0, inf),
    ];
    PriorTable {
        kappa: [
            tn(10.0, 0.5, 5.0, 20.0),
            tn(0.07, 0.0035, 0.05, 5.0),
            tn(0.66, 0.033, 0.3, 1.0),
            tn(0.66, 0.033, 0.3, 1.0),
            tn(0.02, 0.001, 0.005, 0.05),
        ],
        log_alpha: treatments.iter().map(|t| (t.as_ref().to_string(), tn(0.0, 1.0, -5.0, 5.0))).collect(),
        pi_manure: [
            tn(0.49, 0.01, 0.0, 1.0),
            tn(0.49, 0.01, 0.0, 1.0),
            tn(0.0, 0.01, 0.0, 1.0),
            tn(0.0, 0.01, 0.0, 1.0),
            tn(0.02, 0.01, 0.0, 1.0),
        ],
        p_xf: tn(0.46, 0.01, 0.0, 1.0),
        p_hs: tn(0.46, 0.01, 0.0, 1.0),
        p_clay: tn(0.16, 0.02, 0.0, 1.0),
        r_dpm_rpm: tn(1.44, 0.5, 0.0, inf),
        sigma2_process: [process; 5],
        sigma2_meas: [ig(10.5, 0.053), ig(10.5, 0.039), ig(10.5, 0.290)],
        initial: vec![initial; n_plots],
    }
}

/// Applies a sensitivity scenario to a base table.
///
/// Scenarios are not meant to compose: applying A twice inflates twice.
pub fn apply_scenario(table: &PriorTable, scenario: Scenario) -> Result<PriorTable, PriorError> {
    let mut out = table.clone();
    match scenario {
        Scenario::N => {}
        Scenario::A => {
            for prior in out.kappa.iter_mut() {
                *prior = inflate_variance(prior, 4.0)?;
            }
        }
        Scenario::B => {
            out.sigma2_process = [ig(102.4, 0.08); 5];
        }
    }
    Ok(out)
}

fn inflate_variance(prior: &Prior, factor: f64) -> Result<Prior, PriorError> {
    match prior {
        Prior::TruncNormal(d) => Ok(d.with_sigma(d.sigma() * factor.sqrt())?.into()),
        Prior::LogNormal(d) => Ok(super::LogNormal::new(d.mu(), d.sigma2() * factor)?.into()),
        Prior::InverseGamma(_) => Err(PriorError::InvalidParameters(
            "variance inflation is defined for truncated normal and lognormal decay-rate priors".into(),
        )),
    }
}

impl PriorTable {
    /// Parameters at their prior means; `α_τ` is `exp(E[log α_τ])`.
    pub fn mean_params(&self) -> crate::ModelParams {
        use crate::model::{DecayRates, NoiseParams, PrimaryRouting};
        crate::ModelParams {
            rates: DecayRates {
                kappa: self.kappa.map(|p| p.mean()),
                alpha: self.log_alpha.iter().map(|(t, p)| (t.clone(), p.mean().exp())).collect(),
            },
            routing: PrimaryRouting {
                p_xf: self.p_xf.mean(),
                p_hs: self.p_hs.mean(),
                p_clay: self.p_clay.mean(),
                r_dpm_rpm: self.r_dpm_rpm.mean(),
                pi_m: self.pi_manure.map(|p| p.mean()),
            },
            noise: NoiseParams {
                sigma2_process: self.sigma2_process.map(|p| p.mean()),
                sigma2_meas: self.sigma2_meas.map(|p| p.mean()),
            },
        }
    }

    /// Prior-mean initial stocks of plot `k`.
    pub fn mean_initial(&self, k: usize) -> crate::PoolState {
        crate::PoolState::from_array(self.initial[k].map(|p| p.mean()))
    }

    pub fn n_plots(&self) -> usize {
        self.initial.len()
    }

    pub fn treatments(&self) -> impl Iterator<Item = &str> {
        self.log_alpha.keys().map(String::as_str)
    }

    /// All entries in canonical order.
    pub fn entries(&self) -> Vec<PriorEntry> {
        let mut out = Vec::new();
        let mut push = |name: String, prior: &Prior| out.push(PriorEntry { name, prior: *prior });
        for (n, p) in POOL_NAMES.iter().zip(&self.kappa) {
            push(format!("kappa_{n}"), p);
        }
        for (t, p) in &self.log_alpha {
            push(format!("log_alpha[{t}]"), p);
        }
        for (n, p) in POOL_NAMES.iter().zip(&self.pi_manure) {
            push(format!("pi_M_{n}"), p);
        }
        push("p_xf".into(), &self.p_xf);
        push("p_hs".into(), &self.p_hs);
        push("p_clay".into(), &self.p_clay);
        push("r_dpm_rpm".into(), &self.r_dpm_rpm);
        for (n, p) in POOL_NAMES.iter().zip(&self.sigma2_process) {
            push(format!("sigma2_{n}"), p);
        }
        for (n, p) in MEAS_NAMES.iter().zip(&self.sigma2_meas) {
            push(format!("sigma2_{n}"), p);
        }
        for (k, init) in self.initial.iter().enumerate() {
            for (n, p) in INIT_NAMES.iter().zip(init) {
                push(format!("{n}0[{k}]"), p);
            }
        }
        out
    }

    /// Mutable access to a named entry.
    pub fn get_mut(&mut self, name: &str) -> Result<&mut Prior, PriorError> {
        let unknown = || PriorError::UnknownEntry(name.to_string());
        let pool = |s: &str| POOL_NAMES.iter().position(|n| *n == s);
        if let Some(rest) = name.strip_prefix("kappa_") {
            return pool(rest).map(|k| &mut self.kappa[k]).ok_or_else(unknown);
        }
        if let Some(rest) = name.strip_prefix("pi_M_") {
            return pool(rest).map(|k| &mut self.pi_manure[k]).ok_or_else(unknown);
        }
        if let Some(label) = name.strip_prefix("log_alpha[").and_then(|r| r.strip_suffix(']')) {
            return self.log_alpha.get_mut(label).ok_or_else(unknown);
        }
        match name {
            "p_xf" => return Ok(&mut self.p_xf),
            "p_hs" => return Ok(&mut self.p_hs),
            "p_clay" => return Ok(&mut self.p_clay),
            "r_dpm_rpm" => return Ok(&mut self.r_dpm_rpm),
            _ => {}
        }
        if let Some(rest) = name.strip_prefix("sigma2_") {
            if let Some(k) = pool(rest) {
                return Ok(&mut self.sigma2_process[k]);
            }
            return MEAS_NAMES
                .iter()
                .position(|n| *n == rest)
                .map(|k| &mut self.sigma2_meas[k])
                .ok_or_else(unknown);
        }
        // Initial state: `<pool>0[<plot index>]`.
        let (head, idx) = name.split_once("0[").ok_or_else(unknown)?;
        let idx: usize = idx.strip_suffix(']').and_then(|s| s.parse().ok()).ok_or_else(unknown)?;
        let pool = INIT_NAMES.iter().position(|n| *n == head).ok_or_else(unknown)?;
        self.initial.get_mut(idx).map(|row| &mut row[pool]).ok_or_else(unknown)
    }

    /// Replaces named entries; unknown names are an error.
    pub fn apply_overrides(&mut self, overrides: &[PriorEntry]) -> Result<(), PriorError> {
        for entry in overrides {
            *self.get_mut(&entry.name)? = entry.prior;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries()).expect("prior entries serialise")
    }

    /// Rebuilds a table from a full entry list produced by [`to_json`](Self::to_json).
    pub fn from_json(json: &str) -> Result<Self, PriorError> {
        let entries: Vec<PriorEntry> = serde_json::from_str(json).map_err(|e| PriorError::Malformed(e.to_string()))?;
        let treatments: Vec<&str> = entries
            .iter()
            .filter_map(|e| e.name.strip_prefix("log_alpha[").and_then(|r| r.strip_suffix(']')))
            .collect();
        let n_plots = entries.iter().filter(|e| e.name.starts_with("D0[")).count();
        let mut table = default_priors(n_plots, &treatments);
        let expected = table.entries().len();
        if entries.len() != expected {
            return Err(PriorError::Malformed(format!("expected {expected} entries, found {}", entries.len())));
        }
        table.apply_overrides(&entries)?;
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn as_tn(p: &Prior) -> TruncNormal {
        match p {
            Prior::TruncNormal(d) => *d,
            other => panic!("expected truncated normal, got {other:?}"),
        }
    }

    fn as_ig(p: &Prior) -> InverseGamma {
        match p {
            Prior::InverseGamma(d) => *d,
            other => panic!("expected inverse gamma, got {other:?}"),
        }
    }

    #[test]
    fn base_table_values() {
        let t = default_priors(42, &["PP", "PF"]);
        let kh = as_tn(&t.kappa[4]);
        assert_eq!((kh.mu(), kh.sigma(), kh.lo(), kh.hi()), (0.02, 0.001, 0.005, 0.05));
        let clay = as_tn(&t.p_clay);
        assert_eq!((clay.mu(), clay.sigma(), clay.lo(), clay.hi()), (0.16, 0.02, 0.0, 1.0));
        let toc = as_ig(&t.sigma2_meas[0]);
        assert_eq!((toc.shape(), toc.scale()), (10.5, 0.053));
        let roc = as_ig(&t.sigma2_meas[2]);
        assert_eq!((roc.shape(), roc.scale()), (10.5, 0.290));
        let n_initial = t.entries().iter().filter(|e| e.name.contains("0[")).count();
        assert_eq!(n_initial, 252);
        let r0 = as_tn(&t.initial[17][1]);
        assert_eq!((r0.mu(), r0.sigma(), r0.lo(), r0.hi()), (0.0, 100.0, 0.0, f64::INFINITY));
    }

    #[test]
    fn scenario_a_doubles_decay_rate_scales() {
        let base = default_priors(3, &["T"]);
        let a = apply_scenario(&base, Scenario::A).unwrap();
        let expected = [1.0, 0.007, 0.066, 0.066, 0.002];
        for (p, want) in a.kappa.iter().zip(expected) {
            assert!((as_tn(p).sigma() - want).abs() < 1e-15);
        }
        assert_eq!(as_tn(&a.kappa[0]).mu(), 10.0);
        assert_eq!(a.sigma2_process, base.sigma2_process);
    }

    #[test]
    fn scenario_b_and_n() {
        let base = default_priors(3, &["T"]);
        assert_eq!(apply_scenario(&base, Scenario::N).unwrap(), base);
        let b = apply_scenario(&base, Scenario::B).unwrap();
        for p in &b.sigma2_process {
            let d = as_ig(p);
            assert_eq!((d.shape(), d.scale()), (102.4, 0.08));
        }
        assert_eq!(b.kappa, base.kappa);
    }

    #[test]
    fn unknown_scenario_label() {
        assert!(matches!("C".parse::<Scenario>(), Err(PriorError::UnknownScenario(_))));
    }

    #[test]
    fn json_roundtrip_and_overrides() {
        let mut t = default_priors(2, &["PP", "Nn0"]);
        t.apply_overrides(&[PriorEntry { name: "H0[1]".into(), prior: tn(40.0, 5.0, 0.0, f64::INFINITY) }])
            .unwrap();
        let back = PriorTable::from_json(&t.to_json()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_json(), t.to_json());
        let mut t2 = t.clone();
        assert!(t2.get_mut("kappa_Q").is_err());
        assert!(t2.get_mut("H0[5]").is_err());
        assert!(t2.get_mut("log_alpha[XX]").is_err());
        assert!(t2.get_mut("sigma2_TOC").is_ok());
    }
}
