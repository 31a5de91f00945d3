use std::f64::consts::{LN_2, PI, SQRT_2};

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use super::PriorError;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal quantile.
pub fn norm_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// `log(Φ(b) - Φ(a))` for standardised bounds, computed on whichever side
/// of zero keeps the subtraction well conditioned.
fn log_norm_mass(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        (norm_sf(a) - norm_sf(b)).ln()
    } else if b < 0.0 {
        (norm_cdf(b) - norm_cdf(a)).ln()
    } else {
        (1.0 - norm_cdf(a) - norm_sf(b)).ln()
    }
}

/// Normal `N(mu, sigma²)` truncated to `[lo, hi]`; infinite bounds allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTruncNormal", into = "RawTruncNormal")]
pub struct TruncNormal {
    mu: f64,
    sigma: f64,
    lo: f64,
    hi: f64,
    log_z: f64,
}

#[derive(Serialize, Deserialize)]
struct RawTruncNormal {
    mu: f64,
    sigma: f64,
    /// `null` means unbounded.
    lo: Option<f64>,
    hi: Option<f64>,
}

impl TryFrom<RawTruncNormal> for TruncNormal {
    type Error = PriorError;

    fn try_from(raw: RawTruncNormal) -> Result<Self, Self::Error> {
        TruncNormal::new(raw.mu, raw.sigma, raw.lo.unwrap_or(f64::NEG_INFINITY), raw.hi.unwrap_or(f64::INFINITY))
    }
}

impl From<TruncNormal> for RawTruncNormal {
    fn from(d: TruncNormal) -> Self {
        RawTruncNormal {
            mu: d.mu,
            sigma: d.sigma,
            lo: d.lo.is_finite().then_some(d.lo),
            hi: d.hi.is_finite().then_some(d.hi),
        }
    }
}

impl TruncNormal {
    pub fn new(mu: f64, sigma: f64, lo: f64, hi: f64) -> Result<Self, PriorError> {
        if !mu.is_finite() || !(sigma > 0.0) || !sigma.is_finite() || lo.is_nan() || hi.is_nan() || !(lo < hi) {
            return Err(PriorError::InvalidParameters(format!(
                "truncated normal needs finite mu, sigma > 0 and lo < hi (got mu={mu}, sigma={sigma}, lo={lo}, hi={hi})"
            )));
        }
        let log_z = log_norm_mass((lo - mu) / sigma, (hi - mu) / sigma);
        if !log_z.is_finite() {
            return Err(PriorError::InvalidParameters(format!(
                "truncation interval [{lo}, {hi}] carries no mass under N({mu}, {sigma}²)"
            )));
        }
        Ok(Self { mu, sigma, lo, hi, log_z })
    }

    /// Unbounded-above truncation at zero: the half-normal family used for
    /// initial pool stocks.
    pub fn positive(mu: f64, sigma: f64) -> Result<Self, PriorError> {
        Self::new(mu, sigma, 0.0, f64::INFINITY)
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn lo(&self) -> f64 {
        self.lo
    }
    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// `log(Φ(β) - Φ(α))`, the log normalising constant.
    pub fn log_normalizer(&self) -> f64 {
        self.log_z
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self, PriorError> {
        Self::new(self.mu, sigma, self.lo, self.hi)
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        if !(x >= self.lo && x <= self.hi) {
            return f64::NEG_INFINITY;
        }
        let z = (x - self.mu) / self.sigma;
        -0.5 * z * z - LN_SQRT_2PI - self.sigma.ln() - self.log_z
    }

    /// Derivative of `log_pdf` inside the support.
    pub fn dlog_pdf(&self, x: f64) -> f64 {
        -(x - self.mu) / (self.sigma * self.sigma)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        if x >= self.hi {
            return 1.0;
        }
        let a = (self.lo - self.mu) / self.sigma;
        let z = (x - self.mu) / self.sigma;
        (log_norm_mass(a, z) - self.log_z).exp().min(1.0)
    }

    pub fn mean(&self) -> f64 {
        let a = (self.lo - self.mu) / self.sigma;
        let b = (self.hi - self.mu) / self.sigma;
        let phi = |t: f64| if t.is_finite() { (-0.5 * t * t - LN_SQRT_2PI).exp() } else { 0.0 };
        self.mu + self.sigma * (phi(a) - phi(b)) / self.log_z.exp()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let a = (self.lo - self.mu) / self.sigma;
        let b = (self.hi - self.mu) / self.sigma;
        // Work on the side of zero where the interval sits further out.
        let (z, flip) = if a >= -b { (std_trunc(a, b, rng), false) } else { (std_trunc(-b, -a, rng), true) };
        let z = if flip { -z } else { z };
        (self.mu + self.sigma * z).clamp(self.lo, self.hi)
    }
}

/// Standard normal truncated to `[a, b]` with `a >= -b`.
fn std_trunc<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    const TAIL: f64 = 3.0;
    if a < TAIL {
        // Inverse CDF in survival form, which is accurate for a > 0.
        let sa = norm_sf(a);
        let sb = norm_sf(b);
        let u: f64 = rng.random();
        let q = sa - u * (sa - sb);
        let z = SQRT_2 * erfc_inv(2.0 * q);
        return z.clamp(a, b);
    }
    if b - a < 1.0 / a {
        // Narrow far-tail window: uniform proposal.
        loop {
            let z = a + (b - a) * rng.random::<f64>();
            let u: f64 = rng.random();
            if u.ln() <= 0.5 * (a * a - z * z) {
                return z;
            }
        }
    }
    // Shifted exponential proposal with the optimal rate.
    let rate = 0.5 * (a + (a * a + 4.0).sqrt());
    let exp = Exp::new(rate).expect("positive rate");
    loop {
        let z = a + exp.sample(rng);
        if z > b {
            continue;
        }
        let u: f64 = rng.random();
        if u.ln() <= -0.5 * (z - rate) * (z - rate) {
            return z;
        }
    }
}

/// Inverse gamma with density proportional to `x^{-shape-1} exp(-scale/x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInverseGamma", into = "RawInverseGamma")]
pub struct InverseGamma {
    shape: f64,
    scale: f64,
    log_norm: f64,
}

#[derive(Serialize, Deserialize)]
struct RawInverseGamma {
    shape: f64,
    scale: f64,
}

impl TryFrom<RawInverseGamma> for InverseGamma {
    type Error = PriorError;
    fn try_from(raw: RawInverseGamma) -> Result<Self, Self::Error> {
        InverseGamma::new(raw.shape, raw.scale)
    }
}

impl From<InverseGamma> for RawInverseGamma {
    fn from(d: InverseGamma) -> Self {
        RawInverseGamma { shape: d.shape, scale: d.scale }
    }
}

impl InverseGamma {
    pub fn new(shape: f64, scale: f64) -> Result<Self, PriorError> {
        if !(shape > 0.0 && scale > 0.0) || !shape.is_finite() || !scale.is_finite() {
            return Err(PriorError::InvalidParameters(format!(
                "inverse gamma needs shape > 0 and scale > 0 (got {shape}, {scale})"
            )));
        }
        Ok(Self { shape, scale, log_norm: shape * scale.ln() - ln_gamma(shape) })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        if !(x > 0.0) || !x.is_finite() {
            return f64::NEG_INFINITY;
        }
        self.log_norm - (self.shape + 1.0) * x.ln() - self.scale / x
    }

    pub fn dlog_pdf(&self, x: f64) -> f64 {
        -(self.shape + 1.0) / x + self.scale / (x * x)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            gamma_ur(self.shape, self.scale / x)
        }
    }

    pub fn mode(&self) -> f64 {
        self.scale / (self.shape + 1.0)
    }

    /// Mean, infinite when `shape <= 1`.
    pub fn mean(&self) -> f64 {
        if self.shape > 1.0 {
            self.scale / (self.shape - 1.0)
        } else {
            f64::INFINITY
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let g = Gamma::new(self.shape, 1.0).expect("validated shape");
        self.scale / g.sample(rng)
    }
}

/// Lognormal with log-scale mean `mu` and log-scale variance `sigma2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLogNormal", into = "RawLogNormal")]
pub struct LogNormal {
    mu: f64,
    sigma2: f64,
}

#[derive(Serialize, Deserialize)]
struct RawLogNormal {
    mu: f64,
    sigma2: f64,
}

impl TryFrom<RawLogNormal> for LogNormal {
    type Error = PriorError;
    fn try_from(raw: RawLogNormal) -> Result<Self, Self::Error> {
        LogNormal::new(raw.mu, raw.sigma2)
    }
}

impl From<LogNormal> for RawLogNormal {
    fn from(d: LogNormal) -> Self {
        RawLogNormal { mu: d.mu, sigma2: d.sigma2 }
    }
}

impl LogNormal {
    pub fn new(mu: f64, sigma2: f64) -> Result<Self, PriorError> {
        if !mu.is_finite() || !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(PriorError::InvalidParameters(format!("lognormal needs finite mu and sigma2 > 0 (got {mu}, {sigma2})")));
        }
        Ok(Self { mu, sigma2 })
    }

    /// Mean-one multiplier `exp(N(-σ²/2, σ²))`.
    pub fn mean_one(sigma2: f64) -> Result<Self, PriorError> {
        Self::new(-0.5 * sigma2, sigma2)
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        if !(x > 0.0) || !x.is_finite() {
            return f64::NEG_INFINITY;
        }
        let lx = x.ln();
        let r = lx - self.mu;
        -lx - 0.5 * (LN_2 + PI.ln() + self.sigma2.ln()) - r * r / (2.0 * self.sigma2)
    }

    pub fn dlog_pdf(&self, x: f64) -> f64 {
        -(1.0 + (x.ln() - self.mu) / self.sigma2) / x
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            norm_cdf((x.ln() - self.mu) / self.sigma2.sqrt())
        }
    }

    pub fn mean(&self) -> f64 {
        (self.mu + 0.5 * self.sigma2).exp()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        (self.mu + self.sigma2.sqrt() * z).exp()
    }
}

/// Any prior family the parameter model accepts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Prior {
    TruncNormal(TruncNormal),
    InverseGamma(InverseGamma),
    LogNormal(LogNormal),
}

impl From<TruncNormal> for Prior {
    fn from(d: TruncNormal) -> Self {
        Prior::TruncNormal(d)
    }
}

impl From<InverseGamma> for Prior {
    fn from(d: InverseGamma) -> Self {
        Prior::InverseGamma(d)
    }
}

impl From<LogNormal> for Prior {
    fn from(d: LogNormal) -> Self {
        Prior::LogNormal(d)
    }
}

impl Prior {
    pub fn log_pdf(&self, x: f64) -> f64 {
        match self {
            Prior::TruncNormal(d) => d.log_pdf(x),
            Prior::InverseGamma(d) => d.log_pdf(x),
            Prior::LogNormal(d) => d.log_pdf(x),
        }
    }

    pub fn dlog_pdf(&self, x: f64) -> f64 {
        match self {
            Prior::TruncNormal(d) => d.dlog_pdf(x),
            Prior::InverseGamma(d) => d.dlog_pdf(x),
            Prior::LogNormal(d) => d.dlog_pdf(x),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Prior::TruncNormal(d) => d.cdf(x),
            Prior::InverseGamma(d) => d.cdf(x),
            Prior::LogNormal(d) => d.cdf(x),
        }
    }

    /// Closed support `(lo, hi)`.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Prior::TruncNormal(d) => (d.lo, d.hi),
            Prior::InverseGamma(_) | Prior::LogNormal(_) => (0.0, f64::INFINITY),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Prior::TruncNormal(d) => d.mean(),
            Prior::InverseGamma(d) => d.mean(),
            Prior::LogNormal(d) => d.mean(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Prior::TruncNormal(d) => d.sample(rng),
            Prior::InverseGamma(d) => d.sample(rng),
            Prior::LogNormal(d) => d.sample(rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trunc_normal_density_at_center() {
        let d = TruncNormal::new(0.5, 1.0, 0.0, 1.0).unwrap();
        // log(φ(0) / (Φ(0.5) - Φ(-0.5)))
        assert!((d.log_pdf(0.5) - 0.040_977_800_490_949_58).abs() < 1e-13);
        assert_eq!(d.log_pdf(-0.1), f64::NEG_INFINITY);
        assert_eq!(d.log_pdf(1.0001), f64::NEG_INFINITY);
    }

    #[test]
    fn trunc_normal_interior_is_shifted_normal() {
        let d = TruncNormal::new(10.0, 0.5, 5.0, 20.0).unwrap();
        for x in [6.0, 9.7, 10.0, 12.5] {
            let z: f64 = (x - 10.0) / 0.5;
            let plain = -0.5 * z * z - 0.5 * (2.0 * PI).ln() - 0.5f64.ln();
            assert!((d.log_pdf(x) - (plain - d.log_normalizer())).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_mass_rejected() {
        assert!(TruncNormal::new(0.0, 1e-3, 50.0, 60.0).is_err());
        assert!(TruncNormal::new(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(TruncNormal::new(0.0, -1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn inverse_gamma_unimodal() {
        let d = InverseGamma::new(403.4, 0.318).unwrap();
        let mode = d.mode();
        assert!(d.log_pdf(mode).is_finite());
        assert!(d.log_pdf(mode) > d.log_pdf(2.0 * mode));
        assert!(d.log_pdf(mode) > d.log_pdf(0.5 * mode));
        assert_eq!(d.log_pdf(0.0), f64::NEG_INFINITY);
        assert_eq!(d.log_pdf(-1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn inverse_gamma_mean_matches_draws() {
        let d = InverseGamma::new(403.4, 0.318).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let mean = (0..n).map(|_| d.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean / 7.902_584_493_041_75e-4 - 1.0).abs() < 0.01);
    }

    #[test]
    fn mean_one_lognormal() {
        let d = LogNormal::mean_one(0.04).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 1.0).abs() < 3.0 * (var / n as f64).sqrt());
    }

    #[test]
    fn extreme_truncation_stays_in_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in [
            TruncNormal::new(0.0, 0.01, 0.0, 1.0).unwrap(),
            TruncNormal::new(0.0, 1.0, 6.0, 6.5).unwrap(),
            TruncNormal::new(0.0, 1.0, 8.0, f64::INFINITY).unwrap(),
            TruncNormal::new(0.0, 1.0, f64::NEG_INFINITY, -7.0).unwrap(),
            TruncNormal::new(0.07, 0.0035, 0.05, 5.0).unwrap(),
        ] {
            for _ in 0..2000 {
                let x = d.sample(&mut rng);
                assert!(x >= d.lo() && x <= d.hi(), "{x} outside {d:?}");
            }
        }
    }

    #[test]
    fn serde_keeps_infinite_bounds() {
        let p: Prior = TruncNormal::positive(0.0, 100.0).unwrap().into();
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, r#"{"family":"trunc_normal","mu":0.0,"sigma":100.0,"lo":0.0,"hi":null}"#);
        let back: Prior = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<Prior>(r#"{"family":"inverse_gamma","shape":-1,"scale":1}"#).is_err());
    }
}
