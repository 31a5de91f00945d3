use crate::scalar::Real;

use super::pools::PoolState;
use super::ModelError;

/// Annualised atmospheric flux `(12/T) Σ_X (X_0 - X_T)`, Mg C ha⁻¹ y⁻¹.
///
/// Negative values mean the plot sequestered carbon.
pub fn flux_plot<T: Real>(initial: &PoolState<T>, final_state: &PoolState<T>, t_months: usize) -> Result<T, ModelError> {
    if t_months == 0 {
        return Err(ModelError::ZeroHorizon);
    }
    let months = T::from_usize(t_months).expect("month count fits the scalar");
    Ok(T::lit(12.0) * (initial.total() - final_state.total()) / months)
}

/// Area-weighted treatment flux from `(flux, area)` pairs.
pub fn flux_treatment<T: Real>(fluxes: &[(T, T)]) -> Result<T, ModelError> {
    if fluxes.is_empty() {
        return Err(ModelError::EmptyFluxSet);
    }
    let mut weighted = T::zero();
    let mut total_area = T::zero();
    for &(flux, area) in fluxes {
        if !(area > T::zero()) {
            return Err(ModelError::NonPositiveArea(area.to_f64().unwrap_or(f64::NAN)));
        }
        weighted = weighted + flux * area;
        total_area = total_area + area;
    }
    Ok(weighted / total_area)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_total(total: f64) -> PoolState<f64> {
        PoolState::new(0.0, total / 2.0, 0.0, 0.0, total / 2.0, 0.0)
    }

    #[test]
    fn unchanged_stock_has_zero_flux() {
        let s = with_total(55.0);
        assert_eq!(flux_plot(&s, &s, 120).unwrap(), 0.0);
    }

    #[test]
    fn loss_and_gain() {
        assert_eq!(flux_plot(&with_total(60.0), &with_total(48.0), 120).unwrap(), 1.2);
        assert!((flux_plot(&with_total(48.0), &with_total(60.0), 120).unwrap() + 1.2).abs() < 1e-12);
    }

    #[test]
    fn zero_horizon_rejected() {
        assert_eq!(flux_plot(&with_total(1.0), &with_total(1.0), 0), Err(ModelError::ZeroHorizon));
    }

    #[test]
    fn weighted_average() {
        assert_eq!(flux_treatment(&[(1.0, 2.0), (2.0, 2.0), (3.0, 2.0)]).unwrap(), 2.0);
        assert_eq!(flux_treatment(&[(-0.7, 5.0)]).unwrap(), -0.7);
        assert_eq!(flux_treatment(&[(0.0, 1.0), (4.0, 3.0)]).unwrap(), 3.0);
    }

    #[test]
    fn degenerate_sets_rejected() {
        assert_eq!(flux_treatment::<f64>(&[]), Err(ModelError::EmptyFluxSet));
        assert!(matches!(flux_treatment(&[(1.0, 0.0)]), Err(ModelError::NonPositiveArea(_))));
    }
}
