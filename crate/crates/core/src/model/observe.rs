use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

use super::pools::PoolState;
use super::ModelError;

/// Laboratory-measurable carbon fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MeasurementType {
    #[serde(rename = "TOC")]
    Toc,
    #[serde(rename = "POC")]
    Poc,
    #[serde(rename = "ROC")]
    Roc,
}

impl MeasurementType {
    /// Fixed output order used throughout the crate.
    pub const ALL: [MeasurementType; 3] = [MeasurementType::Toc, MeasurementType::Poc, MeasurementType::Roc];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MeasurementType::Toc => "TOC",
            MeasurementType::Poc => "POC",
            MeasurementType::Roc => "ROC",
        }
    }

    /// Row of the observation matrix: which of D, R, F, S, H, I are summed.
    pub fn mask(self) -> [bool; 6] {
        match self {
            MeasurementType::Toc => [true; 6],
            MeasurementType::Poc => [true, true, true, false, false, false],
            MeasurementType::Roc => [false, false, false, false, false, true],
        }
    }
}

impl fmt::Display for MeasurementType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MeasurementType {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "TOC" => Ok(MeasurementType::Toc),
            "POC" => Ok(MeasurementType::Poc),
            "ROC" => Ok(MeasurementType::Roc),
            other => Err(ModelError::InvalidInput(format!("unknown measurement type `{other}`"))),
        }
    }
}

/// Measurable fractions in (TOC, POC, ROC) order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fractions<T> {
    pub toc: T,
    pub poc: T,
    pub roc: T,
}

impl<T: Real> Fractions<T> {
    pub fn get(&self, kind: MeasurementType) -> T {
        match kind {
            MeasurementType::Toc => self.toc,
            MeasurementType::Poc => self.poc,
            MeasurementType::Roc => self.roc,
        }
    }
}

pub fn observe_map<T: Real>(state: &PoolState<T>) -> Fractions<T> {
    Fractions { toc: state.total(), poc: state.d + state.r + state.f, roc: state.i }
}

/// Single fraction; equivalent to `observe_map(state).get(kind)`.
#[inline]
pub fn fraction<T: Real>(state: &PoolState<T>, kind: MeasurementType) -> T {
    match kind {
        MeasurementType::Toc => state.total(),
        MeasurementType::Poc => state.d + state.r + state.f,
        MeasurementType::Roc => state.i,
    }
}
