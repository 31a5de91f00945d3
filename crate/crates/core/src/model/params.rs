use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

use super::ModelError;

/// Routing parameters sampled directly; everything in [`DerivedRouting`]
/// is a deterministic function of these.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimaryRouting<T> {
    /// Share of retained decay from D, R, F and S routed to F (rest to H).
    pub p_xf: T,
    /// Share of retained humus decay routed to S (rest back to H).
    pub p_hs: T,
    /// Clay proportion of the soil.
    pub p_clay: T,
    /// Ratio of decomposable to resistant material in plant inputs.
    pub r_dpm_rpm: T,
    /// Unnormalised manure routing weights to D, R, F, S, H.
    pub pi_m: [T; 5],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedRouting<T> {
    pub p_pd: T,
    pub r_co2_solid: T,
    pub p_uf: T,
    pub p_us: T,
    pub p_uh: T,
    pub p_vf: T,
    pub p_vs: T,
    pub p_vh: T,
    /// Normalised manure fractions to D, R, F, S, H.
    pub p_m: [T; 5],
}

impl<T: Real> DerivedRouting<T> {
    /// Fraction of decayed carbon respired as CO₂.
    pub fn co2_share(&self) -> T {
        self.r_co2_solid / (T::one() + self.r_co2_solid)
    }
}

fn check_unit<T: Real>(name: &str, x: T) -> Result<(), ModelError> {
    if !(x >= T::zero() && x <= T::one()) {
        return Err(ModelError::InvalidInput(format!("{name} must lie in [0, 1], got {x:?}")));
    }
    Ok(())
}

/// Clay-dependent ratio of respired CO₂ to carbon retained as solid.
pub(crate) fn co2_solid_ratio<T: Real>(p_clay: T) -> T {
    T::lit(1.67) * (T::lit(1.85) + T::lit(1.6) * (T::lit(-7.86) * p_clay).exp())
}

/// Computes the derived routing fractions from the primary parameters.
pub fn derive_routing<T: Real>(primary: &PrimaryRouting<T>) -> Result<DerivedRouting<T>, ModelError> {
    check_unit("p_xf", primary.p_xf)?;
    check_unit("p_hs", primary.p_hs)?;
    check_unit("p_clay", primary.p_clay)?;
    if !(primary.r_dpm_rpm >= T::zero()) || !primary.r_dpm_rpm.is_finite() {
        return Err(ModelError::InvalidInput(format!(
            "r_dpm_rpm must be finite and >= 0, got {:?}",
            primary.r_dpm_rpm
        )));
    }
    if primary.pi_m.iter().any(|w| !(*w >= T::zero()) || !w.is_finite()) {
        return Err(ModelError::InvalidInput("manure weights must be finite and >= 0".into()));
    }
    let total_pi = primary.pi_m.iter().fold(T::zero(), |acc, &w| acc + w);
    if total_pi <= T::zero() {
        return Err(ModelError::ZeroManureWeights);
    }

    let one = T::one();
    let r_co2_solid = co2_solid_ratio(primary.p_clay);
    let retained = one / (one + r_co2_solid);
    Ok(DerivedRouting {
        p_pd: primary.r_dpm_rpm / (one + primary.r_dpm_rpm),
        r_co2_solid,
        p_uf: primary.p_xf * retained,
        p_us: T::zero(),
        p_uh: (one - primary.p_xf) * retained,
        p_vf: T::zero(),
        p_vs: primary.p_hs * retained,
        p_vh: (one - primary.p_hs) * retained,
        p_m: primary.pi_m.map(|w| w / total_pi),
    })
}

/// Marginal decay rates κ (y⁻¹) and per-treatment multipliers α.
///
/// The effective rate for pool X under treatment τ is `κ_X · α_τ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRates<T> {
    pub kappa: [T; 5],
    pub alpha: BTreeMap<String, T>,
}

impl<T: Real> DecayRates<T> {
    pub fn new(kappa: [T; 5], alpha: BTreeMap<String, T>) -> Result<Self, ModelError> {
        if kappa.iter().any(|k| !(*k > T::zero()) || !k.is_finite()) {
            return Err(ModelError::InvalidInput("decay rates must be finite and > 0".into()));
        }
        if let Some((label, a)) = alpha.iter().find(|(_, a)| !(**a > T::zero()) || !a.is_finite()) {
            return Err(ModelError::InvalidInput(format!(
                "treatment modifier for `{label}` must be finite and > 0, got {a:?}"
            )));
        }
        Ok(Self { kappa, alpha })
    }

    /// Rates with a single treatment label.
    pub fn single(kappa: [T; 5], treatment: &str, alpha: T) -> Result<Self, ModelError> {
        Self::new(kappa, BTreeMap::from([(treatment.to_string(), alpha)]))
    }

    /// Effective annual rates `κ_X · α_τ` for D, R, F, S, H.
    pub fn effective(&self, treatment: &str) -> Result<[T; 5], ModelError> {
        let alpha = self
            .alpha
            .get(treatment)
            .ok_or_else(|| ModelError::UnknownTreatment(treatment.to_string()))?;
        Ok(self.kappa.map(|k| k * *alpha))
    }
}

/// Exogenous inputs driving one transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Forcing<T> {
    /// Plant carbon input, Mg C ha⁻¹ month⁻¹.
    pub p: T,
    /// Manure carbon input, Mg C ha⁻¹ month⁻¹.
    pub m: T,
    /// Climate/cover decay-rate modifier.
    pub rate_mod: T,
    /// Step length in months.
    pub dt: T,
}

impl<T: Real> Forcing<T> {
    /// One-month step.
    pub fn monthly(p: T, m: T, rate_mod: T) -> Self {
        Self { p, m, rate_mod, dt: T::one() }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = self.p.is_finite()
            && self.m.is_finite()
            && self.rate_mod.is_finite()
            && self.dt.is_finite()
            && self.p >= T::zero()
            && self.m >= T::zero()
            && self.rate_mod >= T::zero()
            && self.dt > T::zero();
        if ok {
            Ok(())
        } else {
            Err(ModelError::InvalidInput(format!("invalid forcing {self:?}")))
        }
    }
}

/// Process (D, R, F, S, H) and measurement (TOC, POC, ROC) variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams<T> {
    pub sigma2_process: [T; 5],
    pub sigma2_meas: [T; 3],
}

impl<T: Real> NoiseParams<T> {
    pub fn validate(&self) -> Result<(), ModelError> {
        let all = self.sigma2_process.iter().chain(self.sigma2_meas.iter());
        for v in all {
            if !(*v > T::zero()) || !v.is_finite() {
                return Err(ModelError::InvalidInput(format!("variances must be finite and > 0, got {v:?}")));
            }
        }
        Ok(())
    }
}

/// Everything the dynamics and data model need besides states and forcing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    pub rates: DecayRates<T>,
    pub routing: PrimaryRouting<T>,
    pub noise: NoiseParams<T>,
}

impl<T: Real> ModelParams<T> {
    pub fn validate(&self) -> Result<(), ModelError> {
        DecayRates::new(self.rates.kappa, self.rates.alpha.clone())?;
        derive_routing(&self.routing)?;
        self.noise.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn primary(p_clay: f64, r: f64) -> PrimaryRouting<f64> {
        PrimaryRouting { p_xf: 0.46, p_hs: 0.46, p_clay, r_dpm_rpm: r, pi_m: [0.49, 0.49, 0.0, 0.0, 0.02] }
    }

    #[test]
    fn clay_ratio_at_site_value() {
        let d = derive_routing(&primary(0.16, 1.44)).unwrap();
        // 1.67 * (1.85 + 1.6 * exp(-7.86 * 0.16)) at 40 digits
        assert!((d.r_co2_solid - 3.849_244_759_915_677_7).abs() < 1e-12);
        assert!((d.p_pd - 0.590_163_934_426_229_5).abs() < 1e-15);
        assert!((d.p_uf - 0.094_860_132_407_092_36).abs() < 1e-14);
        assert!((d.p_uh - 0.111_357_546_738_760_6).abs() < 1e-14);
        assert!((d.p_uf + d.p_uh - 0.206_217_679_145_852_96).abs() < 1e-14);
    }

    #[test]
    fn zero_dpm_ratio_sends_nothing_to_d() {
        let d = derive_routing(&primary(0.16, 0.0)).unwrap();
        assert_eq!(d.p_pd, 0.0);
    }

    #[test]
    fn fixed_zero_routes() {
        let d = derive_routing(&primary(0.3, 2.0)).unwrap();
        assert_eq!(d.p_us, 0.0);
        assert_eq!(d.p_vf, 0.0);
        let sum: f64 = d.p_m.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_zero_manure_weights_rejected() {
        let mut p = primary(0.16, 1.44);
        p.pi_m = [0.0; 5];
        assert_eq!(derive_routing(&p), Err(ModelError::ZeroManureWeights));
    }

    #[test]
    fn out_of_range_proportion_rejected() {
        let mut p = primary(0.16, 1.44);
        p.p_clay = 1.2;
        assert!(matches!(derive_routing(&p), Err(ModelError::InvalidInput(_))));
    }

    #[test]
    fn unknown_treatment() {
        let rates = DecayRates::single([10.0, 0.07, 0.66, 0.66, 0.02], "PP", 1.0).unwrap();
        assert_eq!(rates.effective("PF"), Err(ModelError::UnknownTreatment("PF".into())));
    }

    #[test]
    fn works_in_single_precision() {
        let p = PrimaryRouting::<f32> { p_xf: 0.46, p_hs: 0.46, p_clay: 0.16, r_dpm_rpm: 1.44, pi_m: [1.0; 5] };
        let d = derive_routing(&p).unwrap();
        assert!((d.r_co2_solid - 3.849_245).abs() < 1e-5);
    }
}
