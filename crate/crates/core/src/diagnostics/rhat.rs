use serde::{Deserialize, Serialize};

use crate::inference::ChainDraws;

use super::DiagnosticsError;

/// Convergence is declared when R̂ is below this value.
pub const RHAT_THRESHOLD: f64 = 1.01;

/// Potential scale reduction factor over `m ≥ 2` chains of equal length
/// `n ≥ 2`:
///
/// `B = n/(m−1) Σ (x̄_j − x̄)²`, `W = mean_j s_j²`,
/// `Var⁺ = (n−1)/n · W + B/n`, `R̂ = √(Var⁺ / W)`, evaluated as
/// `√((n−1)/n + B/(nW))` so that `B = 0` gives `√((n−1)/n)` exactly.
pub fn rhat<S: AsRef<[f64]>>(chains: &[S]) -> Result<f64, DiagnosticsError> {
    let m = chains.len();
    if m < 2 {
        return Err(DiagnosticsError::TooFewChains(m));
    }
    let n = chains[0].as_ref().len();
    if chains.iter().any(|c| c.as_ref().len() != n) {
        return Err(DiagnosticsError::UnequalLengths);
    }
    if n < 2 {
        return Err(DiagnosticsError::TooShort(n));
    }
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| c.as_ref().iter().sum::<f64>() / nf).collect();
    let grand = means.iter().sum::<f64>() / m as f64;
    let b = nf / (m as f64 - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.as_ref().iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (nf - 1.0))
        .sum::<f64>()
        / m as f64;
    if !(w > 0.0) {
        return Err(DiagnosticsError::ZeroWithinVariance);
    }
    Ok(((nf - 1.0) / nf + b / (nf * w)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhatEntry {
    pub name: String,
    /// `None` when undefined (constant chains).
    pub rhat: Option<f64>,
    pub converged: bool,
}

/// R̂ for every column shared by the chains.
pub fn rhat_table(chains: &[ChainDraws]) -> Result<Vec<RhatEntry>, DiagnosticsError> {
    let first = chains.first().ok_or(DiagnosticsError::Empty)?;
    (0..first.dim())
        .map(|j| {
            let cols: Vec<Vec<f64>> = chains.iter().map(|c| c.column(j)).collect();
            let value = match rhat(&cols) {
                Ok(r) => Some(r),
                Err(DiagnosticsError::ZeroWithinVariance) => None,
                Err(e) => return Err(e),
            };
            Ok(RhatEntry {
                name: first.names[j].clone(),
                rhat: value,
                converged: value.is_some_and(|r| r < RHAT_THRESHOLD),
            })
        })
        .collect()
}
