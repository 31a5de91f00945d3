use serde::{Deserialize, Serialize};

use crate::model::{Forcing, MeasurementType, PoolState, DECAYING_POOLS};

use super::InferenceError;

/// One measured carbon fraction at a plot-month.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Month index in `0..=T`.
    pub month: usize,
    pub kind: MeasurementType,
    /// Measured stock, strictly positive.
    pub value: f64,
}

/// Forcing and observations for one field plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub id: String,
    pub treatment: String,
    pub area: f64,
    /// One entry per month; the horizon `T` is its length.
    pub forcing: Vec<Forcing<f64>>,
    pub observations: Vec<Observation>,
}

impl PlotData {
    pub fn horizon(&self) -> usize {
        self.forcing.len()
    }

    pub fn validate(&self) -> Result<(), InferenceError> {
        let bad = |msg: String| InferenceError::InvalidConfig(format!("plot `{}`: {msg}", self.id));
        if self.forcing.is_empty() {
            return Err(bad("forcing sequence is empty".into()));
        }
        if !(self.area > 0.0) || !self.area.is_finite() {
            return Err(bad(format!("area must be positive, got {}", self.area)));
        }
        for (t, f) in self.forcing.iter().enumerate() {
            f.validate().map_err(|e| bad(format!("month {}: {e}", t + 1)))?;
        }
        for obs in &self.observations {
            if obs.month > self.horizon() {
                return Err(bad(format!("observation month {} beyond horizon {}", obs.month, self.horizon())));
            }
            if !(obs.value > 0.0) || !obs.value.is_finite() {
                return Err(bad(format!("observation values must be positive, got {}", obs.value)));
            }
        }
        Ok(())
    }
}

/// Pool states for months `0..=T` of one plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentTrajectory {
    pub states: Vec<PoolState<f64>>,
}

impl LatentTrajectory {
    pub fn new(states: Vec<PoolState<f64>>) -> Result<Self, InferenceError> {
        if states.is_empty() {
            return Err(InferenceError::InvalidConfig("trajectory needs at least the initial state".into()));
        }
        for (t, s) in states.iter().enumerate() {
            s.validate().map_err(|e| InferenceError::InvalidConfig(format!("month {t}: {e}")))?;
            if t > 0 && s.i != states[0].i {
                return Err(InferenceError::InvalidConfig(format!("inert pool changes at month {t}")));
            }
        }
        Ok(Self { states })
    }

    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    pub fn initial(&self) -> &PoolState<f64> {
        &self.states[0]
    }

    pub fn last(&self) -> &PoolState<f64> {
        &self.states[self.states.len() - 1]
    }

    /// True when every decaying pool is strictly positive after month 0.
    pub fn is_log_supported(&self) -> bool {
        self.states[1..].iter().all(|s| DECAYING_POOLS.iter().all(|p| s.get(*p) > 0.0))
    }
}
