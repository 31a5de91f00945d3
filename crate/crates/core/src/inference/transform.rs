use serde::{Deserialize, Serialize};

use crate::priors::Prior;

/// Map from an unconstrained real `u` to a constrained value `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    Identity,
    /// `x = lo + exp(u)` on `(lo, ∞)`.
    Lower { lo: f64 },
    /// `x = hi − exp(u)` on `(−∞, hi)`.
    Upper { hi: f64 },
    /// `x = lo + (hi − lo)·logistic(u)` on `(lo, hi)`.
    Interval { lo: f64, hi: f64 },
}

#[inline]
fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `log(logistic(u))`, stable for large |u|.
#[inline]
fn log_logistic(u: f64) -> f64 {
    if u >= 0.0 {
        -(-u).exp().ln_1p()
    } else {
        u - u.exp().ln_1p()
    }
}

impl Transform {
    /// Transform matching a support interval.
    pub fn for_support(lo: f64, hi: f64) -> Self {
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => Transform::Interval { lo, hi },
            (true, false) => Transform::Lower { lo },
            (false, true) => Transform::Upper { hi },
            (false, false) => Transform::Identity,
        }
    }

    pub fn for_prior(prior: &Prior) -> Self {
        let (lo, hi) = prior.support();
        Self::for_support(lo, hi)
    }

    #[inline]
    pub fn constrain(&self, u: f64) -> f64 {
        match *self {
            Transform::Identity => u,
            Transform::Lower { lo } => lo + u.exp(),
            Transform::Upper { hi } => hi - u.exp(),
            Transform::Interval { lo, hi } => {
                let x = lo + (hi - lo) * logistic(u);
                // Rounding can land exactly on a bound; stay inside.
                x.clamp(lo, hi)
            }
        }
    }

    #[inline]
    pub fn unconstrain(&self, x: f64) -> f64 {
        match *self {
            Transform::Identity => x,
            Transform::Lower { lo } => (x - lo).ln(),
            Transform::Upper { hi } => (hi - x).ln(),
            Transform::Interval { lo, hi } => ((x - lo) / (hi - x)).ln(),
        }
    }

    /// `log |dx/du|`.
    #[inline]
    pub fn log_jacobian(&self, u: f64) -> f64 {
        match *self {
            Transform::Identity => 0.0,
            Transform::Lower { .. } | Transform::Upper { .. } => u,
            Transform::Interval { lo, hi } => (hi - lo).ln() + log_logistic(u) + log_logistic(-u),
        }
    }

    /// `dx/du`.
    #[inline]
    pub fn dx_du(&self, u: f64) -> f64 {
        match *self {
            Transform::Identity => 1.0,
            Transform::Lower { .. } => u.exp(),
            Transform::Upper { .. } => -u.exp(),
            Transform::Interval { lo, hi } => {
                let s = logistic(u);
                (hi - lo) * s * (1.0 - s)
            }
        }
    }

    /// `d log|dx/du| / du`.
    #[inline]
    pub fn dlog_jacobian(&self, u: f64) -> f64 {
        match *self {
            Transform::Identity => 0.0,
            Transform::Lower { .. } | Transform::Upper { .. } => 1.0,
            Transform::Interval { .. } => 1.0 - 2.0 * logistic(u),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: [Transform; 4] = [
        Transform::Identity,
        Transform::Lower { lo: 0.0 },
        Transform::Upper { hi: 2.0 },
        Transform::Interval { lo: 0.05, hi: 5.0 },
    ];

    #[test]
    fn jacobian_matches_finite_difference() {
        for t in ALL {
            for &u in &[-3.0, -0.4, 0.0, 0.7, 2.5] {
                let h = 1e-6;
                let fd = (t.constrain(u + h) - t.constrain(u - h)) / (2.0 * h);
                assert!((fd - t.dx_du(u)).abs() < 1e-7 * (1.0 + fd.abs()), "{t:?} at {u}");
                assert!((fd.abs().ln() - t.log_jacobian(u)).abs() < 1e-6, "{t:?} at {u}");
                let fd2 = (t.log_jacobian(u + h) - t.log_jacobian(u - h)) / (2.0 * h);
                assert!((fd2 - t.dlog_jacobian(u)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn support_selection() {
        assert_eq!(Transform::for_support(0.0, f64::INFINITY), Transform::Lower { lo: 0.0 });
        assert_eq!(Transform::for_support(f64::NEG_INFINITY, f64::INFINITY), Transform::Identity);
        assert_eq!(Transform::for_support(f64::NEG_INFINITY, 1.0), Transform::Upper { hi: 1.0 });
    }

    #[test]
    fn interval_stays_inside_far_out() {
        let t = Transform::Interval { lo: 0.0, hi: 1.0 };
        assert!(t.constrain(-800.0) >= 0.0);
        assert!(t.constrain(800.0) <= 1.0);
        assert!(t.log_jacobian(800.0).is_finite());
    }
}
