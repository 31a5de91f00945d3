use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use soilcarbon::inference::{
    initial_point, log_data, log_process, sample_chains, LatentTrajectory, LogDensity, Observation, Parameterization,
    PlotData, SamplerConfig, SoilPosterior, Transform,
};
use soilcarbon::model::{Forcing, MeasurementType};
use soilcarbon::priors::default_priors;

fn plot(id: &str, treatment: &str, months: usize, seed: u64) -> PlotData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let forcing = (0..months)
        .map(|_| Forcing::monthly(rng.random_range(0.0..0.4), rng.random_range(0.0..0.1), rng.random_range(0.2..1.5)))
        .collect();
    let mut observations = Vec::new();
    for month in [0, months / 2, months] {
        observations.push(Observation { month, kind: MeasurementType::Toc, value: rng.random_range(45.0..55.0) });
        observations.push(Observation { month, kind: MeasurementType::Poc, value: rng.random_range(4.0..7.0) });
        observations.push(Observation { month, kind: MeasurementType::Roc, value: rng.random_range(5.0..7.0) });
    }
    PlotData { id: id.into(), treatment: treatment.into(), area: 1.0, forcing, observations }
}

const BOTH: [Parameterization; 2] = [Parameterization::Centered, Parameterization::NonCentered];

fn small_problem(param: Parameterization) -> SoilPosterior {
    let plots = vec![plot("p1", "PP", 6, 1), plot("p2", "Nn0", 6, 2)];
    SoilPosterior::new(plots, &default_priors(2, &["PP", "Nn0"])).unwrap().with_parameterization(param)
}

fn jitter(u: &[f64], rng: &mut ChaCha8Rng, scale: f64) -> Vec<f64> {
    u.iter().map(|v| v + scale * (rng.random::<f64>() - 0.5)).collect()
}

#[test]
fn gradient_matches_central_differences() {
    for param in BOTH {
        check_gradient(param);
    }
}

fn check_gradient(param: Parameterization) {
    let post = small_problem(param);
    let priors = default_priors(2, &["PP", "Nn0"]);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let base = initial_point(&post, &priors, 0, &mut rng).unwrap();
        let u = jitter(&base, &mut rng, 0.1);
        let mut grad = vec![0.0; u.len()];
        let lp = post.log_density_and_gradient(&u, &mut grad);
        assert!(lp.is_finite());
        let mut scratch = vec![0.0; u.len()];
        for k in 0..u.len() {
            let h = 1e-5 * (1.0 + u[k].abs());
            let mut up = u.clone();
            up[k] += h;
            let mut dn = u.clone();
            dn[k] -= h;
            let fd = (post.log_density_and_gradient(&up, &mut scratch) - post.log_density_and_gradient(&dn, &mut scratch))
                / (2.0 * h);
            let rel = (fd - grad[k]).abs() / 1f64.max(fd.abs()).max(grad[k].abs());
            worst = worst.max(rel);
            assert!(
                rel < 1e-4,
                "{param:?} coordinate {k} ({}): analytic {} vs fd {fd}",
                post.layout().names()[k],
                grad[k]
            );
        }
    }
    eprintln!("{param:?}: worst relative error {worst:e}");
}

#[test]
fn fused_value_matches_component_route() {
    for param in BOTH {
        let post = small_problem(param);
        let priors = default_priors(2, &["PP", "Nn0"]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let u = jitter(&initial_point(&post, &priors, 0, &mut rng).unwrap(), &mut rng, 0.2);
            let mut grad = vec![0.0; u.len()];
            let a = post.log_density_and_gradient(&u, &mut grad);
            let b = post.log_posterior(&u);
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{param:?}: {a} vs {b}");
        }
    }
}

#[test]
fn parameterizations_differ_by_the_innovation_jacobian() {
    let centered = small_problem(Parameterization::Centered);
    let innov = small_problem(Parameterization::NonCentered);
    let priors = default_priors(2, &["PP", "Nn0"]);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..10 {
        let uc = jitter(&initial_point(&centered, &priors, 0, &mut rng).unwrap(), &mut rng, 0.2);
        let params = centered.params(&uc).unwrap();
        let trajs = centered.trajectories(&uc).unwrap();
        let un = innov.unconstrain(&params, &trajs).unwrap();

        let back = innov.trajectories(&un).unwrap();
        for (a, b) in trajs.iter().zip(&back) {
            for (x, y) in a.states.iter().zip(&b.states) {
                for (p, q) in x.to_array().iter().zip(y.to_array()) {
                    assert!((p - q).abs() <= 1e-10 * p.abs(), "{p} vs {q}");
                }
            }
        }
        let (mut a, mut b) = (Vec::new(), Vec::new());
        centered.constrain_into(&uc, &mut a);
        innov.constrain_into(&un, &mut b);
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() <= 1e-10 * p.abs().max(1e-300), "{p} vs {q}");
        }

        let months: usize = trajs.iter().map(|t| t.horizon()).sum();
        let jac: f64 = months as f64 * params.noise.sigma2_process.iter().map(|v| 0.5 * v.ln()).sum::<f64>();
        let lc = centered.log_posterior(&uc);
        let ln = innov.log_posterior(&un);
        assert!((ln - lc - jac).abs() <= 1e-8 * lc.abs().max(1.0), "{ln} vs {lc} + {jac}");
    }
}

#[test]
fn plot_order_does_not_change_value() {
    let a = vec![plot("p1", "PP", 6, 1), plot("p2", "Nn0", 6, 2), plot("p3", "PP", 6, 3), plot("p4", "PP", 6, 4)];
    let mut b = a.clone();
    b.reverse();
    let priors = default_priors(4, &["PP", "Nn0"]);
    let pa = SoilPosterior::new(a, &priors).unwrap();
    let pb = SoilPosterior::new(b, &priors).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let u = initial_point(&pa, &priors, 0, &mut rng).unwrap();
    let (mut ga, mut gb) = (vec![0.0; u.len()], vec![0.0; u.len()]);
    let va = pa.log_density_and_gradient(&u, &mut ga);
    let vb = pb.log_density_and_gradient(&u, &mut gb);
    assert_eq!(va.to_bits(), vb.to_bits());
    assert_eq!(ga, gb);
    assert_eq!(pa.log_posterior(&u).to_bits(), pb.log_posterior(&u).to_bits());
}

#[test]
fn identical_plots_give_identical_gradient_blocks() {
    let p = plot("a", "PP", 6, 7);
    let mut q = p.clone();
    q.id = "b".into();
    let priors = default_priors(2, &["PP"]);
    let post = SoilPosterior::new(vec![p, q], &priors).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let u0 = initial_point(&post, &priors, 0, &mut rng).unwrap();
    let l = post.layout();
    let block = l.plot_offsets[1] - l.plot_offsets[0];
    let mut u = u0.clone();
    let (a, b) = (l.plot_offsets[0], l.plot_offsets[1]);
    let first: Vec<f64> = u[a..a + block].to_vec();
    u[b..b + block].copy_from_slice(&first);
    let mut g = vec![0.0; u.len()];
    post.log_density_and_gradient(&u, &mut g);
    assert_eq!(g[a..a + block], g[b..b + block]);
}

#[test]
fn removing_observations_subtracts_the_data_term() {
    let with = plot("p", "PP", 6, 9);
    let mut without = with.clone();
    without.observations.clear();
    let priors = default_priors(1, &["PP"]);
    let pw = SoilPosterior::new(vec![with.clone()], &priors).unwrap();
    let pn = SoilPosterior::new(vec![without], &priors).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let u = initial_point(&pw, &priors, 0, &mut rng).unwrap();
    let params = pw.params(&u).unwrap();
    let traj = &pw.trajectories(&u).unwrap()[0];
    let data = log_data(&with, traj, &params.noise.sigma2_meas);
    let diff = pw.log_posterior(&u) - pn.log_posterior(&u);
    assert!((diff - data).abs() < 1e-9 * data.abs().max(1.0));
}

#[test]
fn process_density_at_the_deterministic_path() {
    let p = plot("p", "PP", 4, 4);
    let priors = default_priors(1, &["PP"]);
    let post = SoilPosterior::new(vec![p.clone()], &priors).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let u = initial_point(&post, &priors, 0, &mut rng).unwrap();
    let mut params = post.params(&u).unwrap();
    params.noise.sigma2_process = [0.01; 5];
    let traj = &post.trajectories(&u).unwrap()[0];
    // On the mean path each residual is σ²/2.
    let r: f64 = 0.005;
    let term = -0.5 * (2.0 * std::f64::consts::PI * 0.01).ln() - r * r / 0.02;
    let lp = log_process(traj, &params, &p.forcing, "PP");
    assert!((lp - 20.0 * term).abs() < 1e-9, "{lp}");

    params.noise.sigma2_process = [0.02; 5];
    let doubled = log_process(traj, &params, &p.forcing, "PP");
    let r2: f64 = 0.01;
    let term2 = -0.5 * (2.0 * std::f64::consts::PI * 0.02).ln() - r2 * r2 / 0.04;
    assert!((doubled - 20.0 * term2).abs() < 1e-9);

    let mut broken = traj.clone();
    broken.states[2].d = 0.0;
    assert_eq!(log_process(&broken, &params, &p.forcing, "PP"), f64::NEG_INFINITY);
}

#[test]
fn data_term_at_the_mode() {
    let s2 = [0.01, 0.02, 0.03];
    let state = soilcarbon::PoolState::new(1.0, 2.0, 0.1, 0.1, 40.0, 6.0);
    let traj = LatentTrajectory::new(vec![state]).unwrap();
    let z = 6.0 * (-0.03f64 / 2.0).exp();
    let plot = PlotData {
        id: "p".into(),
        treatment: "T".into(),
        area: 1.0,
        forcing: vec![Forcing::monthly(0.0, 0.0, 1.0)],
        observations: vec![Observation { month: 0, kind: MeasurementType::Roc, value: z }],
    };
    let want = -0.5 * (2.0 * std::f64::consts::PI * 0.03).ln() - z.ln();
    assert!((log_data(&plot, &traj, &s2) - want).abs() < 1e-12);
    let empty = PlotData { observations: vec![], ..plot };
    assert_eq!(log_data(&empty, &traj, &s2), 0.0);
}

#[test]
fn transform_roundtrip_over_many_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let ts = [
        Transform::Lower { lo: 0.0 },
        Transform::Interval { lo: 0.005, hi: 0.05 },
        Transform::Interval { lo: -5.0, hi: 5.0 },
        Transform::Upper { hi: 3.0 },
    ];
    for _ in 0..10_000 {
        for t in ts {
            let x = match t {
                Transform::Lower { lo } => lo + rng.random_range(1e-6..1e3),
                Transform::Upper { hi } => hi - rng.random_range(1e-6..1e3),
                Transform::Interval { lo, hi } => lo + (hi - lo) * rng.random_range(1e-6..1.0 - 1e-6),
                Transform::Identity => unreachable!(),
            };
            let back = t.constrain(t.unconstrain(x));
            assert!((back - x).abs() <= 1e-12 * x.abs().max(1.0), "{t:?} {x} {back}");
        }
    }
}

struct Gauss2 {
    prec: [[f64; 2]; 2],
}

impl LogDensity for Gauss2 {
    fn dim(&self) -> usize {
        2
    }
    fn log_density_and_gradient(&self, x: &[f64], g: &mut [f64]) -> f64 {
        let p = &self.prec;
        g[0] = -(p[0][0] * x[0] + p[0][1] * x[1]);
        g[1] = -(p[1][0] * x[0] + p[1][1] * x[1]);
        0.5 * (x[0] * g[0] + x[1] * g[1])
    }
}

#[test]
fn correlated_gaussian_covariance() {
    // Σ = [[1, 0.8], [0.8, 2]].
    let (a, b, d) = (1.0, 0.8, 2.0);
    let det = a * d - b * b;
    let model = Gauss2 { prec: [[d / det, -b / det], [-b / det, a / det]] };
    let cfg = SamplerConfig { n_chains: 4, warmup: 1000, iters: 25_000, thin: 1, seed: 21, ..Default::default() };
    let chains = sample_chains(&model, &cfg, |_, rng| Ok(vec![rng.random::<f64>(), rng.random::<f64>()])).unwrap();
    let draws: Vec<&[f64]> = chains.iter().flat_map(|c| (0..c.n_draws()).map(move |i| c.draw(i))).collect();
    let n = draws.len() as f64;
    let m: Vec<f64> = (0..2).map(|j| draws.iter().map(|x| x[j]).sum::<f64>() / n).collect();
    let cov = |i: usize, j: usize| draws.iter().map(|x| (x[i] - m[i]) * (x[j] - m[j])).sum::<f64>() / (n - 1.0);
    let (s00, s01, s11) = (cov(0, 0), cov(0, 1), cov(1, 1));
    assert!((s00 - a).abs() < 0.05 * a, "{s00}");
    assert!((s11 - d).abs() < 0.05 * d, "{s11}");
    assert!((s01 - b).abs() < 0.05 * b, "{s01}");
}
