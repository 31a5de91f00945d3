use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::inference::{PlotData, SamplerConfig};
use crate::model::Forcing;
use crate::priors::{apply_scenario, default_priors, PriorEntry, PriorTable, Scenario};

use super::csvfmt::{read_forcing, read_observations, read_plots, ObservationRow, PlotRecord};
use super::synthetic::FixedTruth;
use super::DataError;

/// Sampler settings; unset fields fall back to the long-run defaults
/// (6 chains, 20 000 warmup, 50 000 iterations, thin 10).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSettings {
    pub chains: Option<usize>,
    pub warmup: Option<usize>,
    pub iters: Option<usize>,
    pub thin: Option<usize>,
    pub max_depth: Option<usize>,
    pub target_accept: Option<f64>,
}

impl SamplerSettings {
    pub fn resolve(&self, seed: u64) -> SamplerConfig {
        let d = SamplerConfig::default();
        SamplerConfig {
            n_chains: self.chains.unwrap_or(d.n_chains),
            warmup: self.warmup.unwrap_or(d.warmup),
            iters: self.iters.unwrap_or(d.iters),
            thin: self.thin.unwrap_or(d.thin),
            seed,
            max_depth: self.max_depth.unwrap_or(d.max_depth),
            target_accept: self.target_accept.unwrap_or(d.target_accept),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSettings {
    /// Months at which every measurement type is recorded; defaults to the
    /// first and last month.
    #[serde(default)]
    pub observation_months: Option<Vec<usize>>,
    /// Fixed generating values; drawn from the priors when absent.
    #[serde(default)]
    pub truth: Option<FixedTruth>,
}

/// Experiment configuration file (JSON). Paths are relative to the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub plots: PathBuf,
    pub forcing: PathBuf,
    #[serde(default)]
    pub observations: Option<PathBuf>,
    /// Treatments with a modifier prior; defaults to those in the plot table.
    #[serde(default)]
    pub treatments: Option<Vec<String>>,
    #[serde(default = "default_scenario")]
    pub scenario: Scenario,
    /// Entries replacing defaults in the prior table.
    #[serde(default)]
    pub priors: Vec<PriorEntry>,
    #[serde(default)]
    pub sampler: SamplerSettings,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Step length in months applied to every forcing row.
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub synthetic: SyntheticSettings,
}

fn default_scenario() -> Scenario {
    Scenario::N
}

fn default_seed() -> u64 {
    1
}

fn default_dt() -> f64 {
    1.0
}

impl ExperimentConfig {
    pub fn from_json(text: &str, path: &Path) -> Result<Self, DataError> {
        serde_json::from_str(text).map_err(|e| DataError::Parse {
            path: path.to_path_buf(),
            line: e.line() as u64,
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}

/// A validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub config_path: PathBuf,
    pub plot_table: Vec<PlotRecord>,
    pub forcing: BTreeMap<String, Vec<Forcing<f64>>>,
    pub observations: Vec<ObservationRow>,
    /// Per-plot data in plot-table order.
    pub data: Vec<PlotData>,
}

impl Experiment {
    /// Builds an experiment from in-memory tables. File paths in `config`
    /// are kept but not read.
    pub fn from_parts(
        config: ExperimentConfig,
        plot_table: Vec<PlotRecord>,
        forcing: BTreeMap<String, Vec<Forcing<f64>>>,
        observations: Vec<ObservationRow>,
    ) -> Result<Self, DataError> {
        let here = PathBuf::from("<memory>");
        let treatments = treatments_of(&config, &plot_table);
        if let Some(p) = plot_table.iter().find(|p| !treatments.contains(&p.treatment)) {
            return Err(DataError::UnknownTreatment { path: here, plot: p.id.clone(), treatment: p.treatment.clone() });
        }
        for p in &plot_table {
            if !forcing.contains_key(&p.id) {
                return Err(DataError::invalid(&here, format!("no forcing for plot `{}`", p.id)));
            }
        }
        for o in &observations {
            if !plot_table.iter().any(|p| p.id == o.plot_id) {
                return Err(DataError::UnknownPlot { path: here.clone(), line: 0, id: o.plot_id.clone() });
            }
            if !(o.observation.value > 0.0) {
                return Err(DataError::NonPositiveObservation { path: here.clone(), line: 0, value: o.observation.value });
            }
        }
        let observations = observations.into_iter().map(|row| (None, row)).collect();
        Self::assemble(config, here, plot_table, forcing, observations, None)
    }

    fn assemble(
        config: ExperimentConfig,
        config_path: PathBuf,
        plot_table: Vec<PlotRecord>,
        forcing: BTreeMap<String, Vec<Forcing<f64>>>,
        observations: Vec<(Option<u64>, ObservationRow)>,
        obs_path: Option<PathBuf>,
    ) -> Result<Self, DataError> {
        let mut data: Vec<PlotData> = plot_table
            .iter()
            .map(|p| PlotData {
                id: p.id.clone(),
                treatment: p.treatment.clone(),
                area: p.area,
                forcing: forcing[&p.id].clone(),
                observations: Vec::new(),
            })
            .collect();
        for (line, row) in &observations {
            let k = plot_table.iter().position(|p| p.id == row.plot_id).expect("plot ids checked");
            if row.observation.month > data[k].horizon() {
                let path = obs_path.as_deref().unwrap_or(&config_path);
                return Err(DataError::parse(
                    path,
                    line.unwrap_or(0),
                    format!(
                        "month {} is beyond the forcing horizon {} of plot `{}`",
                        row.observation.month,
                        data[k].horizon(),
                        row.plot_id
                    ),
                ));
            }
            data[k].observations.push(row.observation);
        }
        let exp = Experiment {
            config,
            config_path,
            plot_table,
            forcing,
            observations: observations.into_iter().map(|(_, r)| r).collect(),
            data,
        };
        exp.priors()?;
        Ok(exp)
    }

    /// Copy with a different observation set.
    pub fn with_observations(&self, observations: Vec<ObservationRow>) -> Result<Self, DataError> {
        let mut exp = Self::from_parts(self.config.clone(), self.plot_table.clone(), self.forcing.clone(), observations)?;
        exp.config_path = self.config_path.clone();
        Ok(exp)
    }

    pub fn base_dir(&self) -> &Path {
        self.config_path.parent().unwrap_or(Path::new("."))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir().join(p)
    }

    pub fn treatments(&self) -> Vec<String> {
        treatments_of(&self.config, &self.plot_table)
    }

    /// Base table with overrides applied, then the configured scenario.
    pub fn priors(&self) -> Result<PriorTable, DataError> {
        self.priors_for(self.config.scenario)
    }

    pub fn priors_for(&self, scenario: Scenario) -> Result<PriorTable, DataError> {
        let mut table = default_priors(self.plot_table.len(), &self.treatments());
        let err = |e: crate::priors::PriorError| DataError::invalid(&self.config_path, e.to_string());
        table.apply_overrides(&self.config.priors).map_err(err)?;
        apply_scenario(&table, scenario).map_err(err)
    }

    pub fn sampler(&self) -> SamplerConfig {
        self.config.sampler.resolve(self.config.seed)
    }
}

fn treatments_of(config: &ExperimentConfig, plots: &[PlotRecord]) -> Vec<String> {
    match &config.treatments {
        Some(list) => list.clone(),
        None => plots.iter().map(|p| p.treatment.clone()).collect::<BTreeSet<_>>().into_iter().collect(),
    }
}

/// Reads a configuration file and every file it references, validating
/// cross references.
pub fn load_experiment(config_path: &Path) -> Result<Experiment, DataError> {
    let text = std::fs::read_to_string(config_path).map_err(|e| DataError::io(config_path, e))?;
    let config = ExperimentConfig::from_json(&text, config_path)?;
    if !(config.dt > 0.0) || !config.dt.is_finite() {
        return Err(DataError::invalid(config_path, format!("dt must be positive, got {}", config.dt)));
    }
    let base = config_path.parent().unwrap_or(Path::new("."));
    let plots_path = base.join(&config.plots);
    let plot_table = read_plots(&plots_path)?;

    let treatments = treatments_of(&config, &plot_table);
    if let Some(p) = plot_table.iter().find(|p| !treatments.contains(&p.treatment)) {
        return Err(DataError::UnknownTreatment { path: plots_path, plot: p.id.clone(), treatment: p.treatment.clone() });
    }

    let forcing = read_forcing(&base.join(&config.forcing), &plot_table, config.dt)?;
    let (observations, obs_path) = match &config.observations {
        Some(rel) => {
            let path = base.join(rel);
            (read_observations(&path, &plot_table)?, Some(path))
        }
        None => (Vec::new(), None),
    };

    let observations = observations.into_iter().map(|(line, row)| (Some(line), row)).collect();
    let exp = Experiment::assemble(config, config_path.to_path_buf(), plot_table, forcing, observations, obs_path)?;
    Ok(exp)
}
