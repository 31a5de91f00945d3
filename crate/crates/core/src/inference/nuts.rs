use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::InferenceError;

/// A differentiable log density on an unconstrained space.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Returns the log density and writes its gradient. Points outside the
    /// support return −∞; the gradient is then ignored.
    fn log_density_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64;

    fn names(&self) -> Vec<String> {
        (0..self.dim()).map(|i| format!("x[{i}]")).collect()
    }

    /// Maps an unconstrained point to the reported (constrained) values.
    fn constrain(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(x);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub warmup: usize,
    /// Post-warmup iterations before thinning.
    pub iters: usize,
    pub thin: usize,
    pub seed: u64,
    pub max_depth: usize,
    pub target_accept: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { n_chains: 6, warmup: 20_000, iters: 50_000, thin: 10, seed: 1, max_depth: 10, target_accept: 0.8 }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), InferenceError> {
        let bad = |m: &str| Err(InferenceError::InvalidConfig(m.to_string()));
        if self.n_chains == 0 || self.iters == 0 || self.thin == 0 || self.max_depth == 0 {
            return bad("chains, iters, thin and max_depth must be positive");
        }
        if self.iters < self.thin {
            return bad("iters must be at least thin");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad("target_accept must lie in (0, 1)");
        }
        Ok(())
    }

    pub fn kept_per_chain(&self) -> usize {
        self.iters / self.thin
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SamplerStats {
    /// Step size after adaptation.
    pub step_size: f64,
    /// Mean acceptance statistic over post-warmup iterations.
    pub mean_accept: f64,
    /// Divergent post-warmup transitions.
    pub n_divergent: usize,
    pub mean_tree_depth: f64,
    pub n_leapfrog: u64,
}

/// Kept draws of one chain on the constrained scale, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDraws {
    pub chain: usize,
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub stats: SamplerStats,
}

impl ChainDraws {
    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn n_draws(&self) -> usize {
        if self.names.is_empty() {
            0
        } else {
            self.values.len() / self.names.len()
        }
    }

    pub fn draw(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_draws()).map(|i| self.values[i * self.dim() + j]).collect()
    }
}

/// Phase-space point with cached potential gradient.
#[derive(Clone)]
struct Point {
    q: Vec<f64>,
    p: Vec<f64>,
    /// Gradient of the log density at `q`.
    grad: Vec<f64>,
    log_density: f64,
}

struct Hamiltonian<'a, M: LogDensity> {
    model: &'a M,
    inv_metric: Vec<f64>,
}

impl<M: LogDensity> Hamiltonian<'_, M> {
    fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p.iter().zip(&self.inv_metric).map(|(pi, m)| pi * pi * m).sum::<f64>()
    }

    fn energy(&self, z: &Point) -> f64 {
        let h = -z.log_density + self.kinetic(&z.p);
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    fn p_sharp(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(&self.inv_metric).map(|(pi, m)| pi * m).collect()
    }

    fn update(&self, z: &mut Point) {
        z.log_density = self.model.log_density_and_gradient(&z.q, &mut z.grad);
    }

    fn sample_momentum<R: Rng>(&self, z: &mut Point, rng: &mut R) {
        for (p, m) in z.p.iter_mut().zip(&self.inv_metric) {
            let n: f64 = rng.sample(StandardNormal);
            *p = n / m.sqrt();
        }
    }

    fn leapfrog(&self, z: &mut Point, eps: f64) {
        for (p, g) in z.p.iter_mut().zip(&z.grad) {
            *p += 0.5 * eps * g;
        }
        for ((q, p), m) in z.q.iter_mut().zip(&z.p).zip(&self.inv_metric) {
            *q += eps * m * p;
        }
        self.update(z);
        if z.log_density.is_finite() {
            for (p, g) in z.p.iter_mut().zip(&z.grad) {
                *p += 0.5 * eps * g;
            }
        }
    }
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn no_u_turn(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

/// Momentum bookkeeping for one side of a subtree.
struct Edge {
    p: Vec<f64>,
    p_sharp: Vec<f64>,
}

struct TreeState {
    n_leapfrog: u64,
    sum_metro_prob: f64,
    divergent: bool,
}

const MAX_DELTA_H: f64 = 1000.0;

struct Nuts<'a, M: LogDensity> {
    ham: Hamiltonian<'a, M>,
    eps: f64,
    max_depth: usize,
    rng: ChaCha8Rng,
}

struct Transition {
    accept: f64,
    depth: usize,
    divergent: bool,
    n_leapfrog: u64,
}

impl<M: LogDensity> Nuts<'_, M> {
    /// Builds a subtree of `2^depth` leapfrog steps from `z` in direction
    /// `sign`. Returns false when the subtree diverged or turned.
    #[allow(clippy::too_many_arguments)]
    fn build_tree(
        &mut self,
        depth: usize,
        z: &mut Point,
        z_propose: &mut Point,
        beg: &mut Edge,
        end: &mut Edge,
        rho: &mut Vec<f64>,
        h0: f64,
        sign: f64,
        log_sum_weight: &mut f64,
        st: &mut TreeState,
    ) -> bool {
        if depth == 0 {
            self.ham.leapfrog(z, sign * self.eps);
            st.n_leapfrog += 1;
            let h = self.ham.energy(z);
            if h - h0 > MAX_DELTA_H {
                st.divergent = true;
            }
            *log_sum_weight = log_sum_exp(*log_sum_weight, h0 - h);
            st.sum_metro_prob += if h0 - h > 0.0 { 1.0 } else { (h0 - h).exp() };
            z_propose.clone_from(z);
            beg.p_sharp = self.ham.p_sharp(&z.p);
            end.p_sharp.clone_from(&beg.p_sharp);
            for (r, p) in rho.iter_mut().zip(&z.p) {
                *r += p;
            }
            beg.p.clone_from(&z.p);
            end.p.clone_from(&z.p);
            return !st.divergent;
        }

        let dim = z.q.len();
        let mut left = Edge { p: vec![0.0; dim], p_sharp: vec![0.0; dim] };
        let mut rho_left = vec![0.0; dim];
        let mut lsw_left = f64::NEG_INFINITY;
        if !self.build_tree(depth - 1, z, z_propose, beg, &mut left, &mut rho_left, h0, sign, &mut lsw_left, st) {
            return false;
        }

        let mut z_propose_right = z.clone();
        let mut right = Edge { p: vec![0.0; dim], p_sharp: vec![0.0; dim] };
        let mut rho_right = vec![0.0; dim];
        let mut lsw_right = f64::NEG_INFINITY;
        if !self.build_tree(
            depth - 1,
            z,
            &mut z_propose_right,
            &mut right,
            end,
            &mut rho_right,
            h0,
            sign,
            &mut lsw_right,
            st,
        ) {
            return false;
        }

        let lsw_subtree = log_sum_exp(lsw_left, lsw_right);
        *log_sum_weight = log_sum_exp(*log_sum_weight, lsw_subtree);
        let accept_prob = (lsw_right - lsw_subtree).exp();
        if self.rng.random::<f64>() < accept_prob {
            std::mem::swap(z_propose, &mut z_propose_right);
        }

        let rho_subtree = add(&rho_left, &rho_right);
        for (r, s) in rho.iter_mut().zip(&rho_subtree) {
            *r += s;
        }
        let mut persist = no_u_turn(&beg.p_sharp, &end.p_sharp, &rho_subtree);
        persist &= no_u_turn(&beg.p_sharp, &right.p_sharp, &add(&rho_left, &right.p));
        persist &= no_u_turn(&left.p_sharp, &end.p_sharp, &add(&rho_right, &left.p));
        persist
    }

    fn transition(&mut self, z: &mut Point) -> Transition {
        self.ham.sample_momentum(z, &mut self.rng);
        let dim = z.q.len();
        let mut z_fwd = z.clone();
        let mut z_bck = z.clone();
        let mut z_sample = z.clone();
        let mut z_propose = z.clone();

        // Outermost momenta of the whole trajectory on each side.
        let p_sharp = self.ham.p_sharp(&z.p);
        let mut minus = Edge { p: z.p.clone(), p_sharp: p_sharp.clone() };
        let mut plus = Edge { p: z.p.clone(), p_sharp };
        let mut rho = z.p.clone();
        let mut log_sum_weight = 0.0;
        let h0 = self.ham.energy(z);
        let mut st = TreeState { n_leapfrog: 0, sum_metro_prob: 0.0, divergent: false };
        let mut depth = 0;

        while depth < self.max_depth {
            // `beg` is adjacent to the existing trajectory, `end` is the new
            // outermost point.
            let mut beg = Edge { p: vec![0.0; dim], p_sharp: vec![0.0; dim] };
            let mut end = Edge { p: vec![0.0; dim], p_sharp: vec![0.0; dim] };
            let mut rho_new = vec![0.0; dim];
            let mut lsw_subtree = f64::NEG_INFINITY;
            let forward = self.rng.random::<f64>() > 0.5;
            let (z_edge, sign) = if forward { (&mut z_fwd, 1.0) } else { (&mut z_bck, -1.0) };
            let valid = self.build_tree(
                depth,
                z_edge,
                &mut z_propose,
                &mut beg,
                &mut end,
                &mut rho_new,
                h0,
                sign,
                &mut lsw_subtree,
                &mut st,
            );
            if !valid {
                break;
            }
            depth += 1;

            if lsw_subtree > log_sum_weight || self.rng.random::<f64>() < (lsw_subtree - log_sum_weight).exp() {
                z_sample.clone_from(&z_propose);
            }
            log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);

            // The criterion is symmetric in its two edges, so only which
            // points are paired matters.
            let rho_old = std::mem::take(&mut rho);
            rho = add(&rho_old, &rho_new);
            let far_old = if forward { &minus } else { &plus };
            let near_old = if forward { &plus } else { &minus };
            let mut persist = no_u_turn(&far_old.p_sharp, &end.p_sharp, &rho);
            persist &= no_u_turn(&far_old.p_sharp, &beg.p_sharp, &add(&rho_old, &beg.p));
            persist &= no_u_turn(&near_old.p_sharp, &end.p_sharp, &add(&rho_new, &near_old.p));
            if forward {
                plus = end;
            } else {
                minus = end;
            }
            if !persist {
                break;
            }
        }

        *z = z_sample;
        let accept = if st.n_leapfrog > 0 { st.sum_metro_prob / st.n_leapfrog as f64 } else { 0.0 };
        Transition { accept, depth, divergent: st.divergent, n_leapfrog: st.n_leapfrog }
    }

    /// Doubles or halves the step size until one leapfrog step crosses an
    /// acceptance probability of 0.8.
    fn init_step_size(&mut self, z: &mut Point) -> Result<(), String> {
        let start = z.clone();
        let trial = |this: &mut Self, z: &mut Point| {
            z.clone_from(&start);
            this.ham.sample_momentum(z, &mut this.rng);
            let h0 = this.ham.energy(z);
            this.ham.leapfrog(z, this.eps);
            h0 - this.ham.energy(z)
        };
        let threshold = 0.8f64.ln();
        let delta = trial(self, z);
        let direction = if delta > threshold { 1 } else { -1 };
        loop {
            let delta = trial(self, z);
            if (direction == 1 && !(delta > threshold)) || (direction == -1 && !(delta < threshold)) {
                break;
            }
            self.eps = if direction == 1 { 2.0 * self.eps } else { 0.5 * self.eps };
            if self.eps > 1e7 {
                return Err("posterior appears improper: step size diverged".into());
            }
            if self.eps == 0.0 {
                return Err("step size collapsed to zero".into());
            }
        }
        z.clone_from(&start);
        Ok(())
    }
}

/// Dual-averaging step-size adaptation.
struct DualAveraging {
    mu: f64,
    target: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(eps: f64, target: f64) -> Self {
        Self { mu: (10.0 * eps).ln(), target, counter: 0.0, s_bar: 0.0, x_bar: 0.0 }
    }

    fn restart(&mut self, eps: f64) {
        self.mu = (10.0 * eps).ln();
        self.counter = 0.0;
        self.s_bar = 0.0;
        self.x_bar = 0.0;
    }

    fn learn(&mut self, accept: f64) -> f64 {
        self.counter += 1.0;
        let accept = accept.min(1.0);
        let eta = 1.0 / (self.counter + Self::T0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - accept);
        let x = self.mu - self.s_bar * self.counter.sqrt() / Self::GAMMA;
        let x_eta = self.counter.powf(-Self::KAPPA);
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x;
        x.exp()
    }

    fn final_step_size(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Windowed diagonal-metric adaptation: an initial fast buffer, doubling
/// slow windows, and a terminal fast buffer.
struct MetricWindows {
    warmup: usize,
    init_buffer: usize,
    term_buffer: usize,
    counter: usize,
    window_size: usize,
    next_window: usize,
    enabled: bool,
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl MetricWindows {
    fn new(warmup: usize, dim: usize) -> Self {
        let (mut init_buffer, mut term_buffer, mut base) = (75, 50, 25);
        let enabled = warmup >= 20;
        if enabled && init_buffer + base + term_buffer > warmup {
            init_buffer = (0.15 * warmup as f64) as usize;
            term_buffer = (0.1 * warmup as f64) as usize;
            base = warmup - (init_buffer + term_buffer);
        }
        Self {
            warmup,
            init_buffer,
            term_buffer,
            counter: 0,
            window_size: base,
            next_window: init_buffer + base - 1,
            enabled,
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn in_window(&self) -> bool {
        self.counter >= self.init_buffer && self.counter < self.warmup - self.term_buffer && self.counter != self.warmup
    }

    fn window_ends(&self) -> bool {
        self.counter == self.next_window && self.counter != self.warmup
    }

    fn compute_next_window(&mut self) {
        let last = self.warmup - self.term_buffer - 1;
        if self.next_window == last {
            return;
        }
        self.window_size *= 2;
        self.next_window = self.counter + self.window_size;
        if self.next_window != last && self.next_window + 2 * self.window_size >= self.warmup - self.term_buffer {
            self.next_window = last;
        }
    }

    /// Records `q`; returns the regularised variance when a window closes.
    fn learn(&mut self, q: &[f64]) -> Option<Vec<f64>> {
        if !self.enabled {
            return None;
        }
        if self.in_window() {
            self.n += 1;
            let n = self.n as f64;
            for ((m, s), x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(q) {
                let delta = x - *m;
                *m += delta / n;
                *s += delta * (x - *m);
            }
        }
        let out = if self.window_ends() {
            self.compute_next_window();
            let n = self.n as f64;
            let var = self
                .m2
                .iter()
                .map(|s| {
                    let v = s / (n - 1.0);
                    (n / (n + 5.0)) * v + 1e-3 * (5.0 / (n + 5.0))
                })
                .collect();
            self.n = 0;
            self.mean.fill(0.0);
            self.m2.fill(0.0);
            Some(var)
        } else {
            None
        };
        self.counter += 1;
        out
    }
}

/// Per-chain RNG: one ChaCha stream per chain under a common seed.
pub(crate) fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

fn run_chain<M: LogDensity>(
    model: &M,
    config: &SamplerConfig,
    chain: usize,
    mut rng: ChaCha8Rng,
    init: Vec<f64>,
) -> Result<ChainDraws, InferenceError> {
    let dim = model.dim();
    if init.len() != dim {
        return Err(InferenceError::Dimension { expected: dim, got: init.len() });
    }
    let ham = Hamiltonian { model, inv_metric: vec![1.0; dim] };
    let mut z = Point { q: init, p: vec![0.0; dim], grad: vec![0.0; dim], log_density: 0.0 };
    ham.update(&mut z);
    if !z.log_density.is_finite() {
        return Err(InferenceError::InitFailed { chain, attempts: 1 });
    }
    let mut nuts = Nuts { ham, eps: 1.0, max_depth: config.max_depth, rng: ChaCha8Rng::from_rng(&mut rng) };
    let step_err = |reason: String| InferenceError::StepSize { chain, reason };
    nuts.init_step_size(&mut z).map_err(step_err)?;
    let mut dual = DualAveraging::new(nuts.eps, config.target_accept);
    let mut windows = MetricWindows::new(config.warmup, dim);

    for _ in 0..config.warmup {
        let t = nuts.transition(&mut z);
        nuts.eps = dual.learn(t.accept);
        if let Some(var) = windows.learn(&z.q) {
            nuts.ham.inv_metric = var;
            nuts.init_step_size(&mut z).map_err(step_err)?;
            dual.restart(nuts.eps);
        }
    }
    if config.warmup > 0 {
        nuts.eps = dual.final_step_size();
    }

    let names = model.names();
    let kept = config.kept_per_chain();
    let mut values = Vec::with_capacity(kept * dim);
    let mut buf = Vec::with_capacity(dim);
    let mut stats = SamplerStats { step_size: nuts.eps, ..Default::default() };
    let (mut accept_sum, mut depth_sum) = (0.0, 0.0);
    for i in 0..config.iters {
        let t = nuts.transition(&mut z);
        accept_sum += t.accept;
        depth_sum += t.depth as f64;
        stats.n_divergent += usize::from(t.divergent);
        stats.n_leapfrog += t.n_leapfrog;
        if (i + 1) % config.thin == 0 && values.len() < kept * dim {
            model.constrain(&z.q, &mut buf);
            values.extend_from_slice(&buf);
        }
    }
    stats.mean_accept = accept_sum / config.iters as f64;
    stats.mean_tree_depth = depth_sum / config.iters as f64;
    Ok(ChainDraws { chain, names, values, stats })
}

/// Runs `config.n_chains` independent chains, in parallel, from starting
/// points produced by `init(chain, rng)`. The initialiser draws from the
/// chain's own RNG stream, so results depend only on the seed.
pub fn sample_chains<M, F>(model: &M, config: &SamplerConfig, init: F) -> Result<Vec<ChainDraws>, InferenceError>
where
    M: LogDensity,
    F: Fn(usize, &mut ChaCha8Rng) -> Result<Vec<f64>, InferenceError> + Sync,
{
    config.validate()?;
    (0..config.n_chains)
        .into_par_iter()
        .map(|chain| {
            let mut rng = chain_rng(config.seed, chain);
            let start = init(chain, &mut rng)?;
            run_chain(model, config, chain, rng, start)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct StdNormal(usize);

    impl LogDensity for StdNormal {
        fn dim(&self) -> usize {
            self.0
        }
        fn log_density_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            for (g, v) in grad.iter_mut().zip(x) {
                *g = -v;
            }
            -0.5 * x.iter().map(|v| v * v).sum::<f64>()
        }
    }

    #[test]
    fn window_schedule_matches_reference_boundaries() {
        let mut w = MetricWindows::new(1000, 1);
        let mut ends = Vec::new();
        for i in 0..1000 {
            if w.learn(&[i as f64]).is_some() {
                ends.push(i);
            }
        }
        assert_eq!(ends, vec![99, 149, 249, 449, 949]);
    }

    #[test]
    fn short_warmup_uses_proportional_buffers() {
        let w = MetricWindows::new(100, 1);
        assert_eq!((w.init_buffer, w.term_buffer, w.window_size), (15, 10, 75));
    }

    #[test]
    fn same_seed_same_draws() {
        let cfg = SamplerConfig { n_chains: 2, warmup: 200, iters: 100, thin: 1, seed: 9, ..Default::default() };
        let init = |_: usize, rng: &mut ChaCha8Rng| Ok((0..3).map(|_| rng.random::<f64>() - 0.5).collect());
        let a = sample_chains(&StdNormal(3), &cfg, init).unwrap();
        let b = sample_chains(&StdNormal(3), &cfg, init).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].values, a[1].values);
        assert_eq!(a[0].n_draws(), 100);
    }

    #[test]
    fn thinning_keeps_every_kth() {
        let cfg = SamplerConfig { n_chains: 1, warmup: 50, iters: 95, thin: 10, seed: 1, ..Default::default() };
        let out = sample_chains(&StdNormal(2), &cfg, |_, _| Ok(vec![0.1, 0.2])).unwrap();
        assert_eq!(out[0].n_draws(), 9);
    }
}
