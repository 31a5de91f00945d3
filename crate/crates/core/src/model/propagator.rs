use crate::scalar::Real;

use super::dynamics::decay_factors;
use super::params::{DecayRates, DerivedRouting, Forcing};
use super::pools::PoolState;
use super::ModelError;

/// Linear form of the mean dynamics: `next = M · y + g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Propagator<T> {
    pub m: [[T; 6]; 6],
    pub g: [T; 6],
}

impl<T: Real> Propagator<T> {
    pub fn apply(&self, state: &PoolState<T>) -> PoolState<T> {
        let y = state.to_array();
        let mut out = self.g;
        for (row, o) in self.m.iter().zip(out.iter_mut()) {
            *o = row.iter().zip(&y).fold(*o, |acc, (&a, &b)| acc + a * b);
        }
        PoolState::from_array(out)
    }
}

/// Builds the 6×6 propagator and input vector for one step.
///
/// Exponents carry the rate modifier and the annual-to-monthly factor so
/// that `apply` agrees with [`step_deterministic`](super::step_deterministic).
/// Manure routed to F, S and H appears in `g`, and humus decay is routed
/// with the V fractions.
pub fn build_propagator<T: Real>(
    rates: &DecayRates<T>,
    routing: &DerivedRouting<T>,
    treatment: &str,
    forcing: &Forcing<T>,
) -> Result<Propagator<T>, ModelError> {
    forcing.validate()?;
    let e = decay_factors(&rates.effective(treatment)?, forcing);
    let one = T::one();
    let zero = T::zero();
    let lost = e.map(|x| one - x);
    let u_row = |p: T| [p * lost[0], p * lost[1], p * lost[2], p * lost[3]];

    let mut m = [[zero; 6]; 6];
    m[0][0] = e[0];
    m[1][1] = e[1];
    for (row, p_u, p_v) in [(2, routing.p_uf, routing.p_vf), (3, routing.p_us, routing.p_vs), (4, routing.p_uh, routing.p_vh)] {
        m[row][..4].copy_from_slice(&u_row(p_u));
        m[row][4] = p_v * lost[4];
    }
    m[2][2] = m[2][2] + e[2];
    m[3][3] = m[3][3] + e[3];
    m[4][4] = m[4][4] + e[4];
    m[5][5] = one;

    let (p, mm) = (forcing.p, forcing.m);
    let pm = &routing.p_m;
    let g = [
        routing.p_pd * p + pm[0] * mm,
        (one - routing.p_pd) * p + pm[1] * mm,
        pm[2] * mm,
        pm[3] * mm,
        pm[4] * mm,
        zero,
    ];
    Ok(Propagator { m, g })
}
