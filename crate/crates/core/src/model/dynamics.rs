use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::Real;

use super::params::{derive_routing, DecayRates, DerivedRouting, Forcing, ModelParams, NoiseParams};
use super::pools::{PoolState, DECAYING_POOLS};
use super::ModelError;

/// Result of one deterministic transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput<T> {
    pub next: PoolState<T>,
    /// Carbon respired to the atmosphere during the step.
    pub co2: T,
}

/// Per-pool survival factors `exp(-r · K/12 · dt)` for D, R, F, S, H.
#[inline]
pub(crate) fn decay_factors<T: Real>(k_eff: &[T; 5], forcing: &Forcing<T>) -> [T; 5] {
    let scale = -forcing.rate_mod * forcing.dt / T::lit(12.0);
    k_eff.map(|k| (scale * k).exp())
}

/// Deterministic means of the five decaying pools plus the decayed masses
/// (U from D, R, F, S and V from H) given precomputed survival factors.
#[inline]
pub(crate) fn mean_from_factors<T: Real>(
    state: &PoolState<T>,
    factors: &[T; 5],
    routing: &DerivedRouting<T>,
    forcing: &Forcing<T>,
) -> ([T; 5], T, T) {
    let one = T::one();
    let [ed, er, ef, es, eh] = *factors;
    let u = state.d * (one - ed) + state.r * (one - er) + state.f * (one - ef) + state.s * (one - es);
    let v = state.h * (one - eh);
    let (p, m) = (forcing.p, forcing.m);
    let pm = &routing.p_m;
    let means = [
        state.d * ed + routing.p_pd * p + pm[0] * m,
        state.r * er + (one - routing.p_pd) * p + pm[1] * m,
        state.f * ef + routing.p_uf * u + routing.p_vf * v + pm[2] * m,
        state.s * es + routing.p_us * u + routing.p_vs * v + pm[3] * m,
        state.h * eh + routing.p_uh * u + routing.p_vh * v + pm[4] * m,
    ];
    (means, u, v)
}

fn validate_inputs<T: Real>(state: &PoolState<T>, forcing: &Forcing<T>) -> Result<(), ModelError> {
    state.validate()?;
    forcing.validate()
}

/// Carbon decayed during the step: `u` from D, R, F, S and `v` from H.
pub fn decayed_masses<T: Real>(
    state: &PoolState<T>,
    rates: &DecayRates<T>,
    treatment: &str,
    forcing: &Forcing<T>,
) -> Result<(T, T), ModelError> {
    validate_inputs(state, forcing)?;
    let factors = decay_factors(&rates.effective(treatment)?, forcing);
    let one = T::one();
    let stocks = [state.d, state.r, state.f, state.s];
    let u = stocks.iter().zip(&factors[..4]).fold(T::zero(), |acc, (&x, &e)| acc + x * (one - e));
    let v = state.h * (one - factors[4]);
    Ok((u, v))
}

/// Advances the mean dynamics one step.
///
/// Plant and manure inputs are added after decay. The inert pool carries
/// over unchanged and `co2` closes the mass balance.
pub fn step_deterministic<T: Real>(
    state: &PoolState<T>,
    rates: &DecayRates<T>,
    routing: &DerivedRouting<T>,
    treatment: &str,
    forcing: &Forcing<T>,
) -> Result<StepOutput<T>, ModelError> {
    validate_inputs(state, forcing)?;
    let factors = decay_factors(&rates.effective(treatment)?, forcing);
    let (means, u, v) = mean_from_factors(state, &factors, routing, forcing);
    let [d, r, f, s, h] = means;
    Ok(StepOutput {
        next: PoolState { d, r, f, s, h, i: state.i },
        co2: (u + v) * routing.co2_share(),
    })
}

/// Advances the stochastic dynamics one step with caller-supplied
/// standard-normal draws `eta` for D, R, F, S, H.
///
/// Each decaying pool is its deterministic mean times
/// `exp(-σ²/2 + σ·eta)`, a mean-one lognormal multiplier.
pub fn step_stochastic<T: Real>(
    state: &PoolState<T>,
    rates: &DecayRates<T>,
    routing: &DerivedRouting<T>,
    noise: &NoiseParams<T>,
    treatment: &str,
    forcing: &Forcing<T>,
    eta: &[T; 5],
) -> Result<PoolState<T>, ModelError> {
    let det = step_deterministic(state, rates, routing, treatment, forcing)?.next;
    let mut out = det.to_array();
    for (k, pool) in DECAYING_POOLS.iter().enumerate() {
        let var = noise.sigma2_process[k];
        if !(var >= T::zero()) || !var.is_finite() {
            return Err(ModelError::InvalidInput(format!("process variance for {pool} is {var:?}")));
        }
        let mean = out[k];
        if var == T::zero() {
            continue;
        }
        if !(mean > T::zero()) {
            return Err(ModelError::DegenerateMean { pool: *pool, value: mean.to_f64().unwrap_or(f64::NAN) });
        }
        out[k] = mean * (-var / T::lit(2.0) + var.sqrt() * eta[k]).exp();
    }
    Ok(PoolState::from_array(out))
}

/// Mean trajectory for months `0..=T` from `x0`, one step per forcing entry.
pub fn simulate_deterministic<T: Real>(
    x0: &PoolState<T>,
    params: &ModelParams<T>,
    treatment: &str,
    forcing: &[Forcing<T>],
) -> Result<Vec<PoolState<T>>, ModelError> {
    let routing = derive_routing(&params.routing)?;
    let mut states = Vec::with_capacity(forcing.len() + 1);
    states.push(*x0);
    for f in forcing {
        let next = step_deterministic(&states[states.len() - 1], &params.rates, &routing, treatment, f)?.next;
        states.push(next);
    }
    Ok(states)
}

/// Stochastic trajectory for months `0..=T` with standard-normal draws
/// taken from `rng`, five per month in pool order.
pub fn simulate_stochastic<R: Rng + ?Sized>(
    x0: &PoolState<f64>,
    params: &ModelParams<f64>,
    treatment: &str,
    forcing: &[Forcing<f64>],
    rng: &mut R,
) -> Result<Vec<PoolState<f64>>, ModelError> {
    let routing = derive_routing(&params.routing)?;
    let mut states = Vec::with_capacity(forcing.len() + 1);
    states.push(*x0);
    for f in forcing {
        let eta: [f64; 5] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let last = states[states.len() - 1];
        states.push(step_stochastic(&last, &params.rates, &routing, &params.noise, treatment, f, &eta)?);
    }
    Ok(states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::{derive_routing, PrimaryRouting};
    use crate::model::Pool;

    fn setup(kd: f64) -> (DecayRates<f64>, DerivedRouting<f64>) {
        let rates = DecayRates::single([kd, 0.07, 0.66, 0.66, 0.02], "T", 1.0).unwrap();
        let routing = derive_routing(&PrimaryRouting {
            p_xf: 0.46,
            p_hs: 0.46,
            p_clay: 0.16,
            r_dpm_rpm: 1.44,
            pi_m: [0.49, 0.49, 0.0, 0.0, 0.02],
        })
        .unwrap();
        (rates, routing)
    }

    #[test]
    fn zero_state_decays_nothing() {
        let (rates, _) = setup(10.0);
        let uv = decayed_masses(&PoolState::zero(), &rates, "T", &Forcing::monthly(1.0, 1.0, 1.0)).unwrap();
        assert_eq!(uv, (0.0, 0.0));
    }

    #[test]
    fn zero_rate_modifier_decays_nothing() {
        let (rates, _) = setup(10.0);
        let state = PoolState::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0);
        let uv = decayed_masses(&state, &rates, "T", &Forcing::monthly(0.0, 0.0, 0.0)).unwrap();
        assert_eq!(uv, (0.0, 0.0));
    }

    #[test]
    fn single_pool_decay() {
        let (rates, _) = setup(10.0);
        let state = PoolState::new(10.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let (u, v) = decayed_masses(&state, &rates, "T", &Forcing::monthly(0.0, 0.0, 1.0)).unwrap();
        // 10 (1 - e^{-10/12})
        assert!((u - 5.654_017_914_929_218).abs() < 1e-12);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn identity_when_nothing_happens() {
        let (rates, routing) = setup(10.0);
        let state = PoolState::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0);
        let out = step_deterministic(&state, &rates, &routing, "T", &Forcing::monthly(0.0, 0.0, 0.0)).unwrap();
        assert_eq!(out.next, state);
        assert_eq!(out.co2, 0.0);
    }

    #[test]
    fn d_pool_line() {
        let (rates, routing) = setup(10.0);
        let state = PoolState::new(10.0, 0.0, 0.0, 0.0, 0.0, 6.0);
        let out = step_deterministic(&state, &rates, &routing, "T", &Forcing::monthly(2.0, 0.0, 1.0)).unwrap();
        assert!((out.next.d - 5.526_309_953_923_241).abs() < 1e-12);
        assert_eq!(out.next.i, 6.0);
    }

    #[test]
    fn half_sigma_draws_reproduce_the_mean() {
        let (rates, routing) = setup(10.0);
        let noise = NoiseParams { sigma2_process: [0.01, 0.04, 0.02, 0.09, 0.0025], sigma2_meas: [0.01; 3] };
        let state = PoolState::new(1.0, 20.0, 0.3, 0.4, 40.0, 6.0);
        let forcing = Forcing::monthly(0.5, 0.1, 0.9);
        let eta = noise.sigma2_process.map(|v: f64| v.sqrt() / 2.0);
        let det = step_deterministic(&state, &rates, &routing, "T", &forcing).unwrap().next;
        let sto = step_stochastic(&state, &rates, &routing, &noise, "T", &forcing, &eta).unwrap();
        for (a, b) in det.to_array().iter().zip(sto.to_array()) {
            assert!((a - b).abs() <= 1e-14 * a.abs());
        }
    }

    #[test]
    fn degenerate_mean_is_an_error() {
        let (rates, routing) = setup(10.0);
        let noise = NoiseParams { sigma2_process: [0.01; 5], sigma2_meas: [0.01; 3] };
        let err = step_stochastic(
            &PoolState::zero(),
            &rates,
            &routing,
            &noise,
            "T",
            &Forcing::monthly(0.0, 0.0, 1.0),
            &[0.0; 5],
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::DegenerateMean { pool: Pool::D, .. }));
    }

    #[test]
    fn rejects_negative_stock() {
        let (rates, routing) = setup(10.0);
        let state = PoolState::new(-1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert!(step_deterministic(&state, &rates, &routing, "T", &Forcing::monthly(0.0, 0.0, 1.0)).is_err());
    }
}
