//! Inverse-gamma priors for process-noise variances chosen from a band on
//! the mean-one multiplicative error `exp(η)`, `η ~ N(-σ²/2, σ²)`.

use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use super::dist::{norm_cdf, norm_quantile, InverseGamma};
use super::PriorError;

/// Result of [`fit_ig_to_multiplier_band`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IgBandFit {
    pub dist: InverseGamma,
    /// Achieved `Pr(exp(η) < lo_mult)`.
    pub lower_tail: f64,
    /// Achieved `Pr(exp(η) > hi_mult)`.
    pub upper_tail: f64,
}

const GRID: usize = 2001;
const SHAPE_RANGE: (f64, f64) = (2.0, 1.0e5);

fn trigamma_approx(a: f64) -> f64 {
    // Asymptotic series, adequate for a >= 1 on the integration window.
    let mut x = a;
    let mut acc = 0.0;
    while x < 6.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = x * x;
    acc + 1.0 / x + 1.0 / (2.0 * x2) + 1.0 / (6.0 * x2 * x) - 1.0 / (30.0 * x2 * x2 * x)
}

/// Both multiplier tail probabilities when `σ² ~ IG(shape, scale)`,
/// integrating the conditional normal tails over `log σ²` by Simpson's rule.
pub fn multiplier_tails(ig: &InverseGamma, lo_mult: f64, hi_mult: f64) -> (f64, f64) {
    let (a, b) = (ig.shape(), ig.scale());
    // log σ² = log b - log G with G ~ Gamma(a, 1).
    let centre = (b / a).ln();
    let sd = trigamma_approx(a).sqrt();
    let t_lo = centre - 14.0 * sd;
    let t_hi = centre + (14.0 * sd).max(45.0 / a);
    let h = (t_hi - t_lo) / (GRID - 1) as f64;
    let log_norm = a * b.ln() - ln_gamma(a);
    let (ll, lh) = (lo_mult.ln(), hi_mult.ln());

    let mut lower = 0.0;
    let mut upper = 0.0;
    for k in 0..GRID {
        let t = t_lo + h * k as f64;
        let s2 = t.exp();
        let w = (log_norm - a * t - b / s2).exp();
        if w == 0.0 {
            continue;
        }
        let s = s2.sqrt();
        let p_lo = norm_cdf((ll + 0.5 * s2) / s);
        let p_hi = 0.5 * erfc((lh + 0.5 * s2) / s / std::f64::consts::SQRT_2);
        let coef = if k == 0 || k == GRID - 1 {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        lower += coef * w * p_lo;
        upper += coef * w * p_hi;
    }
    (lower * h / 3.0, upper * h / 3.0)
}

fn golden_min(mut lo: f64, mut hi: f64, iters: usize, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Finds an inverse gamma `(shape, scale)` for `σ²` such that
/// `Pr(exp(η) < lo_mult)` and `Pr(exp(η) > hi_mult)` are both close to
/// `tail_prob`.
///
/// The two tails generally cannot be matched exactly (the lognormal
/// multiplier is skewed), so the fit minimises the squared log-ratio of
/// both tails to the target over shape in `[2, 1e5]`. The band is reported
/// infeasible when the best fit misses either tail by more than a factor 2.
pub fn fit_ig_to_multiplier_band(lo_mult: f64, hi_mult: f64, tail_prob: f64) -> Result<IgBandFit, PriorError> {
    if !(lo_mult > 0.0 && lo_mult < 1.0 && hi_mult > 1.0 && hi_mult.is_finite()) {
        return Err(PriorError::InvalidParameters(format!(
            "multiplier band must satisfy 0 < lo < 1 < hi (got {lo_mult}, {hi_mult})"
        )));
    }
    if !(tail_prob > 0.0 && tail_prob < 0.5) {
        return Err(PriorError::InvalidParameters(format!("tail probability must lie in (0, 0.5), got {tail_prob}")));
    }
    let target = tail_prob.ln();
    let loss = |a: f64, b: f64| {
        let ig = InverseGamma::new(a, b).expect("positive parameters");
        let (l, u) = multiplier_tails(&ig, lo_mult, hi_mult);
        let dl = l.max(1e-300).ln() - target;
        let du = u.max(1e-300).ln() - target;
        dl * dl + du * du
    };
    // Variance that puts a symmetric normal band at the requested tails.
    let z = norm_quantile(1.0 - tail_prob);
    let s2_guess = ((hi_mult / lo_mult).ln() / (2.0 * z)).powi(2);
    let best_scale = |a: f64| {
        let centre = (s2_guess * (a + 1.0)).ln();
        golden_min(centre - 6.0, centre + 6.0, 60, |lb| loss(a, lb.exp()))
    };
    let (log_a, _) = golden_min(SHAPE_RANGE.0.ln(), SHAPE_RANGE.1.ln(), 50, |la| best_scale(la.exp()).1);
    let shape = log_a.exp();
    let scale = best_scale(shape).0.exp();
    let dist = InverseGamma::new(shape, scale)?;
    let (lower_tail, upper_tail) = multiplier_tails(&dist, lo_mult, hi_mult);
    let worst = (lower_tail / tail_prob).ln().abs().max((upper_tail / tail_prob).ln().abs());
    if !(worst <= std::f64::consts::LN_2) {
        return Err(PriorError::InfeasibleBand { lower: lower_tail, upper: upper_tail, target: tail_prob });
    }
    Ok(IgBandFit { dist, lower_tail, upper_tail })
}
