use serde::{Deserialize, Serialize};

use crate::inference::ChainDraws;

use super::DiagnosticsError;

/// Posterior median with 50% and 90% central intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub name: String,
    pub median: f64,
    pub q05: f64,
    pub q25: f64,
    pub q75: f64,
    pub q95: f64,
    /// Posterior probability that the quantity is negative.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prob_negative: Option<f64>,
}

impl SummaryRow {
    pub fn iqr(&self) -> f64 {
        self.q75 - self.q25
    }

    pub fn covers90(&self, x: f64) -> bool {
        self.q05 <= x && x <= self.q95
    }
}

/// Empirical quantile of sorted data with linear interpolation between
/// order statistics (position `p·(n−1)`).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn summarize_values(name: &str, values: &[f64], with_tail: bool) -> Result<SummaryRow, DiagnosticsError> {
    if values.is_empty() {
        return Err(DiagnosticsError::Empty);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p| quantile(&sorted, p);
    let prob_negative =
        with_tail.then(|| values.iter().filter(|v| **v < 0.0).count() as f64 / values.len() as f64);
    Ok(SummaryRow {
        name: name.to_string(),
        median: q(0.5),
        q05: q(0.05),
        q25: q(0.25),
        q75: q(0.75),
        q95: q(0.95),
        prob_negative,
    })
}

/// Summary of a named coordinate, pooling kept draws across chains.
pub fn summarize(draws: &[ChainDraws], name: &str) -> Result<SummaryRow, DiagnosticsError> {
    let first = draws.first().ok_or(DiagnosticsError::Empty)?;
    let j = first.column_index(name).ok_or_else(|| DiagnosticsError::UnknownQuantity(name.to_string()))?;
    let values: Vec<f64> = draws.iter().flat_map(|c| c.column(j)).collect();
    summarize_values(name, &values, false)
}

/// Summary of a derived quantity `f(draw)`, with its tail probability.
pub fn summarize_with<F>(draws: &[ChainDraws], name: &str, f: F) -> Result<SummaryRow, DiagnosticsError>
where
    F: Fn(&[f64]) -> f64,
{
    let values: Vec<f64> = draws.iter().flat_map(|c| (0..c.n_draws()).map(|i| f(c.draw(i)))).collect();
    summarize_values(name, &values, true)
}
