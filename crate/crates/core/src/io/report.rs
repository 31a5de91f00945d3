use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{flux_posterior, rhat_table, summarize, RhatEntry, SummaryRow, RHAT_THRESHOLD};
use crate::inference::{ChainDraws, PlotData, SamplerStats};

use super::DataError;

/// Run report: parameter and flux summaries, R̂ per coordinate with the
/// convergence flag, and per-chain sampler statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub rhat_threshold: f64,
    pub all_converged: bool,
    pub n_nonconverged: usize,
    pub summaries: Vec<SummaryRow>,
    pub fluxes: Vec<SummaryRow>,
    pub rhat: Vec<RhatEntry>,
    pub sampler: Vec<SamplerStats>,
}

impl RunReport {
    pub fn summary(&self, name: &str) -> Option<&SummaryRow> {
        self.summaries.iter().chain(&self.fluxes).find(|s| s.name == name)
    }
}

fn is_state(name: &str) -> bool {
    // Latent stocks look like `D[plot][t]` or `I[plot]`.
    name.len() > 1 && name.as_bytes()[1] == b'[' && "DRFSHI".contains(&name[..1])
}

/// Summaries of every non-state coordinate and of treatment fluxes, plus
/// R̂ for every coordinate. R̂ needs at least two chains; with one chain
/// the table is empty and the run is not marked converged.
pub fn build_report(
    chains: &[ChainDraws],
    plots: &[PlotData],
    scenario: &str,
    seed: u64,
) -> Result<RunReport, crate::Error> {
    let first = chains.first().ok_or(crate::diagnostics::DiagnosticsError::Empty)?;
    let summaries = first
        .names
        .iter()
        .filter(|n| !is_state(n))
        .map(|n| summarize(chains, n))
        .collect::<Result<Vec<_>, _>>()?;
    let fluxes = flux_posterior(chains, plots)?;
    let rhat = if chains.len() >= 2 && first.n_draws() >= 2 { rhat_table(chains)? } else { Vec::new() };
    let n_nonconverged = rhat.iter().filter(|r| !r.converged).count();
    Ok(RunReport {
        scenario: scenario.to_string(),
        seed,
        rhat_threshold: RHAT_THRESHOLD,
        all_converged: !rhat.is_empty() && n_nonconverged == 0,
        n_nonconverged,
        summaries,
        fluxes,
        rhat,
        sampler: chains.iter().map(|c| c.stats).collect(),
    })
}

pub fn export_report(path: &Path, report: &RunReport) -> Result<(), DataError> {
    let text = serde_json::to_string_pretty(report).expect("report serialises");
    std::fs::write(path, text + "\n").map_err(|e| DataError::io(path, e))
}

pub fn read_report(path: &Path) -> Result<RunReport, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| DataError::parse(path, e.line() as u64, e.to_string()))
}
