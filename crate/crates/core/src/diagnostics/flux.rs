use std::collections::BTreeMap;

use crate::inference::{ChainDraws, PlotData};
use crate::model::flux_treatment;

use super::summary::{summarize_values, SummaryRow};
use super::DiagnosticsError;

const POOLS: [&str; 5] = ["D", "R", "F", "S", "H"];

/// Per-draw treatment fluxes (Mg C ha⁻¹ y⁻¹), pooled across chains, keyed
/// by treatment. The inert pool cancels and is not read.
pub fn flux_draws(draws: &[ChainDraws], plots: &[PlotData]) -> Result<BTreeMap<String, Vec<f64>>, DiagnosticsError> {
    let first = draws.first().ok_or(DiagnosticsError::Empty)?;
    let col = |name: String| first.column_index(&name).ok_or(DiagnosticsError::UnknownQuantity(name));
    // (treatment, area, horizon, initial columns, final columns) per plot.
    let mut index = Vec::with_capacity(plots.len());
    for plot in plots {
        let t = plot.horizon();
        let start: Vec<usize> = POOLS.iter().map(|p| col(format!("{p}[{}][0]", plot.id))).collect::<Result<_, _>>()?;
        let end: Vec<usize> = POOLS.iter().map(|p| col(format!("{p}[{}][{t}]", plot.id))).collect::<Result<_, _>>()?;
        index.push((plot.treatment.as_str(), plot.area, t, start, end));
    }
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut per_treatment: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for chain in draws {
        for i in 0..chain.n_draws() {
            let row = chain.draw(i);
            per_treatment.values_mut().for_each(Vec::clear);
            for (treatment, area, t, start, end) in &index {
                let change: f64 = start.iter().zip(end).map(|(a, b)| row[*a] - row[*b]).sum();
                let flux = 12.0 * change / *t as f64;
                per_treatment.entry(treatment).or_default().push((flux, *area));
            }
            for (treatment, fluxes) in &per_treatment {
                let a = flux_treatment(fluxes).expect("plot areas validated on load");
                out.entry(treatment.to_string()).or_default().push(a);
            }
        }
    }
    Ok(out)
}

/// Posterior summary of the area-weighted flux for each treatment, with the
/// posterior probability of sequestration (`flux < 0`).
pub fn flux_posterior(draws: &[ChainDraws], plots: &[PlotData]) -> Result<Vec<SummaryRow>, DiagnosticsError> {
    flux_draws(draws, plots)?
        .iter()
        .map(|(t, v)| summarize_values(&format!("flux[{t}]"), v, true))
        .collect()
}
