use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use soilcarbon::diagnostics::{rhat, trend_surface_diagnostic, TrendSample, RHAT_THRESHOLD};
use soilcarbon::inference::{ChainDraws, SamplerStats};
use soilcarbon::io::build_report;
use soilcarbon::model::MeasurementType;

fn chain(k: usize, names: &[&str], columns: &[Vec<f64>]) -> ChainDraws {
    let n = columns[0].len();
    let values = (0..n).flat_map(|i| columns.iter().map(move |c| c[i])).collect();
    ChainDraws { chain: k, names: names.iter().map(|s| s.to_string()).collect(), values, stats: SamplerStats::default() }
}

#[test]
fn report_flags_an_unconverged_coordinate() {
    let n = 400;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let mean = base.iter().sum::<f64>() / n as f64;
    let w = base.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    // Two copies of `base` offset by `shift` have R̂² = (n−1)/n + shift²/(2w).
    let nf = n as f64;
    let shift = (2.0 * w * (1.02f64.powi(2) - (nf - 1.0) / nf)).sqrt();
    let shifted: Vec<f64> = base.iter().map(|x| x + shift).collect();
    let other: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let other2: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();

    let names = ["kappa_D", "kappa_R"];
    let chains = [chain(0, &names, &[base, other]), chain(1, &names, &[shifted, other2])];
    let report = build_report(&chains, &[], "N", 1).unwrap();
    let entry = report.rhat.iter().find(|r| r.name == "kappa_D").unwrap();
    assert!((entry.rhat.unwrap() - 1.02).abs() < 1e-12);
    assert!(!entry.converged);
    assert!(report.rhat.iter().find(|r| r.name == "kappa_R").unwrap().converged);
    assert_eq!(report.n_nonconverged, 1);
    assert!(!report.all_converged);
    assert_eq!(RHAT_THRESHOLD, 1.01);
}

#[test]
fn rhat_grows_with_separation() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
    let mut last = rhat(&[a.clone(), a.clone()]).unwrap();
    for shift in [0.1, 0.5, 1.0, 5.0] {
        let b: Vec<f64> = a.iter().map(|x| x + shift).collect();
        let r = rhat(&[a.clone(), b]).unwrap();
        assert!(r > last);
        last = r;
    }
}

#[test]
fn trend_surface_recovers_an_exact_bilinear_field() {
    let beta = [3.9, 0.012, -0.004, 0.0002];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let locs: Vec<TrendSample> = (0..42)
        .map(|_| {
            let (x, y) = (rng.random_range(0.0..60.0), rng.random_range(0.0..200.0));
            TrendSample { x, y, value: (beta[0] + beta[1] * x + beta[2] * y + beta[3] * x * y).exp() }
        })
        .collect();
    let surface = trend_surface_diagnostic(&[(MeasurementType::Toc, locs)]).unwrap();
    let fit = &surface.fits[0];
    for (got, want) in fit.coefficients.iter().zip(beta) {
        assert!((got - want).abs() < 1e-8, "{got} vs {want}");
    }
    assert!(fit.residuals.iter().all(|r| r.abs() < 1e-8));
    assert_eq!(surface.pairs.len(), 42 * 41 / 2);
    assert!(surface.pairs.iter().all(|p| p.sq_diff < 1e-15));
}

#[test]
fn trend_surface_rejects_collinear_locations() {
    let locs: Vec<TrendSample> = (0..8).map(|k| TrendSample { x: k as f64, y: 2.0 * k as f64, value: 1.0 + k as f64 }).collect();
    assert!(trend_surface_diagnostic(&[(MeasurementType::Poc, locs)]).is_err());
}
