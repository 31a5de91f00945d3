use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::model::MeasurementType;

use super::DiagnosticsError;

/// One measurement at a plot location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendSample {
    pub x: f64,
    pub y: f64,
    pub value: f64,
}

/// One unordered pair of locations `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualPair {
    pub kind: MeasurementType,
    pub i: usize,
    pub j: usize,
    pub d: f64,
    pub sq_diff: f64,
    pub rootabs_diff: f64,
}

/// OLS fit of `log value ~ 1 + x + y + xy` for one measurement type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendFit {
    pub kind: MeasurementType,
    /// Intercept, x, y, xy.
    pub coefficients: [f64; 4],
    /// Unbiased residual variance (`n − 4` denominator).
    pub sigma2: f64,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSurface {
    pub fits: Vec<TrendFit>,
    /// Rows ordered by type, then `(i, j)`.
    pub pairs: Vec<ResidualPair>,
}

fn fit_one(kind: MeasurementType, samples: &[TrendSample]) -> Result<TrendFit, DiagnosticsError> {
    let n = samples.len();
    if n < 5 {
        return Err(DiagnosticsError::TooFewLocations { kind: kind.to_string(), got: n });
    }
    if let Some(s) = samples.iter().find(|s| !(s.value > 0.0)) {
        return Err(DiagnosticsError::NonPositiveValue(s.value));
    }
    let design = DMatrix::from_fn(n, 4, |i, j| {
        let s = &samples[i];
        match j {
            0 => 1.0,
            1 => s.x,
            2 => s.y,
            _ => s.x * s.y,
        }
    });
    let target = DVector::from_iterator(n, samples.iter().map(|s| s.value.ln()));
    let qr = design.clone().qr();
    let r = qr.r();
    let scale = r.diagonal().amax().max(f64::MIN_POSITIVE);
    if r.diagonal().iter().any(|d| d.abs() <= 1e-10 * scale) {
        return Err(DiagnosticsError::RankDeficient(kind.to_string()));
    }
    let qt_b = qr.q().transpose() * &target;
    let beta = r.solve_upper_triangular(&qt_b).ok_or_else(|| DiagnosticsError::RankDeficient(kind.to_string()))?;
    let residuals: Vec<f64> = (&target - &design * &beta).iter().copied().collect();
    let sigma2 = if n > 4 { residuals.iter().map(|e| e * e).sum::<f64>() / (n - 4) as f64 } else { f64::NAN };
    Ok(TrendFit { kind, coefficients: [beta[0], beta[1], beta[2], beta[3]], sigma2, residuals })
}

/// Fits a bilinear trend surface to the log values of each measurement type
/// and tabulates, for every pair of locations, their distance against the
/// squared and root-absolute residual differences.
pub fn trend_surface_diagnostic(
    samples: &[(MeasurementType, Vec<TrendSample>)],
) -> Result<TrendSurface, DiagnosticsError> {
    let mut fits = Vec::with_capacity(samples.len());
    let mut pairs = Vec::new();
    for (kind, locs) in samples {
        let fit = fit_one(*kind, locs)?;
        for i in 0..locs.len() {
            for j in i + 1..locs.len() {
                let diff = fit.residuals[i] - fit.residuals[j];
                pairs.push(ResidualPair {
                    kind: *kind,
                    i,
                    j,
                    d: (locs[i].x - locs[j].x).hypot(locs[i].y - locs[j].y),
                    sq_diff: diff * diff,
                    rootabs_diff: diff.abs().sqrt(),
                });
            }
        }
        fits.push(fit);
    }
    Ok(TrendSurface { fits, pairs })
}
