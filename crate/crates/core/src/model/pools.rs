use std::fmt;

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pool {
    D,
    R,
    F,
    S,
    H,
    I,
}

/// The five pools subject to decay, in state order.
pub const DECAYING_POOLS: [Pool; 5] = [Pool::D, Pool::R, Pool::F, Pool::S, Pool::H];

impl Pool {
    pub const ALL: [Pool; 6] = [Pool::D, Pool::R, Pool::F, Pool::S, Pool::H, Pool::I];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Pool::D => "D",
            Pool::R => "R",
            Pool::F => "F",
            Pool::S => "S",
            Pool::H => "H",
            Pool::I => "I",
        }
    }
}

impl fmt::Display for Pool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Carbon stock per pool for one plot-month, Mg C ha⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolState<T> {
    pub d: T,
    pub r: T,
    pub f: T,
    pub s: T,
    pub h: T,
    pub i: T,
}

impl<T: Real> PoolState<T> {
    pub fn new(d: T, r: T, f: T, s: T, h: T, i: T) -> Self {
        Self { d, r, f, s, h, i }
    }

    pub fn zero() -> Self {
        Self::from_array([T::zero(); 6])
    }

    pub fn from_array(a: [T; 6]) -> Self {
        Self { d: a[0], r: a[1], f: a[2], s: a[3], h: a[4], i: a[5] }
    }

    pub fn to_array(&self) -> [T; 6] {
        [self.d, self.r, self.f, self.s, self.h, self.i]
    }

    pub fn get(&self, pool: Pool) -> T {
        self.to_array()[pool.index()]
    }

    pub fn total(&self) -> T {
        self.d + self.r + self.f + self.s + self.h + self.i
    }

    /// Checks every stock is finite and nonnegative.
    pub fn validate(&self) -> Result<(), ModelError> {
        for pool in Pool::ALL {
            let x = self.get(pool);
            if !x.is_finite() || x < T::zero() {
                return Err(ModelError::InvalidInput(format!(
                    "pool {pool} stock must be finite and >= 0, got {x:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> PoolState<U> {
        let a = self.to_array();
        PoolState::from_array(a.map(|x| U::from_f64(x.to_f64().unwrap()).unwrap()))
    }
}
