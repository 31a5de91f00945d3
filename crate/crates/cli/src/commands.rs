use std::fmt::Write as _;
use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use soilcarbon::diagnostics::{rhat_table, trend_surface_diagnostic, SummaryRow, TrendSample, RHAT_THRESHOLD};
use soilcarbon::inference::{run_hmc, ChainDraws, LatentTrajectory, SamplerConfig};
use soilcarbon::io::{
    build_report, export_draws, export_report, import_draws, load_experiment, write_forcing, write_observations,
    write_plots, write_trajectories, write_trend_table, Experiment, ExperimentConfig, RunReport,
};
use soilcarbon::model::{simulate_deterministic, simulate_stochastic, MeasurementType};
use soilcarbon::priors::Scenario;

use crate::manifest::Recorder;
use crate::{DiagnoseArgs, Failure, FitArgs, GenArgs, SamplerArgs, SensitivityArgs, SimulateArgs, SummarizeArgs};

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    write_text(path, &(serde_json::to_string_pretty(value).expect("value serialises") + "\n"))
}

fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from("name,median,q05,q25,q75,q95,prob_negative\n");
    for r in rows {
        let tail = r.prob_negative.map_or(String::new(), |p| p.to_string());
        let _ = writeln!(s, "{},{},{},{},{},{},{}", r.name, r.median, r.q05, r.q25, r.q75, r.q95, tail);
    }
    s
}

pub fn simulate(a: &SimulateArgs) -> Result<(), Failure> {
    let exp = load_experiment(&a.config)?;
    let scenario = a.scenario.unwrap_or(exp.config.scenario);
    let priors = exp.priors_for(scenario)?;
    let params = match &exp.config.synthetic.truth {
        Some(t) => t.params.clone(),
        None => priors.mean_params(),
    };
    params.validate()?;
    let seed = a.seed.unwrap_or(exp.config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trajs = Vec::with_capacity(exp.data.len());
    for (k, plot) in exp.data.iter().enumerate() {
        let x0 = exp
            .config
            .synthetic
            .truth
            .as_ref()
            .and_then(|t| t.initial.get(&plot.id).copied())
            .unwrap_or_else(|| priors.mean_initial(k));
        let states = if a.stochastic {
            simulate_stochastic(&x0, &params, &plot.treatment, &plot.forcing, &mut rng)?
        } else {
            simulate_deterministic(&x0, &params, &plot.treatment, &plot.forcing)?
        };
        trajs.push((plot.id.clone(), LatentTrajectory { states }));
    }
    eprintln!("simulated {} plots ({})", trajs.len(), if a.stochastic { "stochastic" } else { "mean dynamics" });

    let mut rec = Recorder::new(&a.out)?;
    let path = rec.path("trajectories.csv");
    write_trajectories(&path, &trajs)?;
    rec.add(path);
    let path = rec.path("params.json");
    write_json(&path, &params)?;
    rec.add(path);
    rec.write("simulate", seed, Some(scenario.as_str()), Some(&a.config))
}

pub fn gen_synthetic(a: &GenArgs) -> Result<(), Failure> {
    let exp = load_experiment(&a.config)?;
    let seed = a.seed.unwrap_or(exp.config.seed);
    let ds = soilcarbon::io::generate_synthetic(&exp, seed)?;
    eprintln!("generated {} observations for {} plots", ds.observations.len(), exp.data.len());

    let mut rec = Recorder::new(&a.out)?;
    let plots = rec.path("plots.csv");
    write_plots(&plots, &exp.plot_table)?;
    let forcing = rec.path("forcing.csv");
    write_forcing(&forcing, &exp.plot_table, &exp.forcing)?;
    let obs = rec.path("observations.csv");
    write_observations(&obs, &ds.observations)?;
    let truth = rec.path("truth.json");
    write_json(&truth, &ds.truth)?;

    // A configuration that fits the generated data with the same priors.
    let config = ExperimentConfig {
        plots: "plots.csv".into(),
        forcing: "forcing.csv".into(),
        observations: Some("observations.csv".into()),
        synthetic: Default::default(),
        ..exp.config.clone()
    };
    let cfg_path = rec.path("experiment.json");
    write_text(&cfg_path, &(config.to_json() + "\n"))?;
    for p in [plots, forcing, obs, truth, cfg_path] {
        rec.add(p);
    }
    rec.write("gen-synthetic", seed, None, Some(&a.config))
}

fn sampler_config(exp: &Experiment, s: &SamplerArgs) -> SamplerConfig {
    let mut settings = exp.config.sampler.clone();
    settings.chains = s.chains.or(settings.chains);
    settings.warmup = s.warmup.or(settings.warmup);
    settings.iters = s.iters.or(settings.iters);
    settings.thin = s.thin.or(settings.thin);
    settings.resolve(s.seed.unwrap_or(exp.config.seed))
}

fn print_rhat(report: &RunReport) {
    let globals: Vec<_> = report.rhat.iter().filter(|r| report.summary(&r.name).is_some()).collect();
    eprintln!("{:<24} {:>8}", "parameter", "R-hat");
    for r in &globals {
        let v = r.rhat.map_or("n/a".to_string(), |v| format!("{v:.4}"));
        eprintln!("{:<24} {:>8}{}", r.name, v, if r.converged { "" } else { "  *" });
    }
    if report.rhat.is_empty() {
        eprintln!("R-hat needs at least two chains with two draws each");
    } else {
        eprintln!(
            "{} of {} coordinates at or above R-hat {}",
            report.n_nonconverged,
            report.rhat.len(),
            report.rhat_threshold
        );
    }
}

/// Runs one fit into `out` and returns its report.
fn fit_into(
    exp: &Experiment,
    config_path: &Path,
    scenario: Scenario,
    cfg: &SamplerConfig,
    out: &Path,
) -> Result<RunReport, Failure> {
    let priors = exp.priors_for(scenario)?;
    eprintln!(
        "scenario {scenario}: {} plots, {} chains x ({} warmup + {} iterations, thin {}), seed {}",
        exp.data.len(),
        cfg.n_chains,
        cfg.warmup,
        cfg.iters,
        cfg.thin,
        cfg.seed
    );
    let chains = run_hmc(&exp.data, &priors, cfg)?;
    for c in &chains {
        let s = &c.stats;
        eprintln!(
            "  chain {}: {} draws, step size {:.4}, accept {:.3}, mean depth {:.2}, divergent {}",
            c.chain,
            c.n_draws(),
            s.step_size,
            s.mean_accept,
            s.mean_tree_depth,
            s.n_divergent
        );
    }
    write_fit_outputs(exp, config_path, scenario, cfg.seed, &chains, out, "fit")
}

fn write_fit_outputs(
    exp: &Experiment,
    config_path: &Path,
    scenario: Scenario,
    seed: u64,
    chains: &[ChainDraws],
    out: &Path,
    command: &str,
) -> Result<RunReport, Failure> {
    let report = build_report(chains, &exp.data, scenario.as_str(), seed)?;
    print_rhat(&report);
    let mut rec = Recorder::new(out)?;
    if command == "fit" {
        for p in export_draws(out, chains)? {
            rec.add(p);
        }
    }
    let path = rec.path("report.json");
    export_report(&path, &report)?;
    rec.add(path);
    let path = rec.path("summary.csv");
    let rows: Vec<SummaryRow> = report.summaries.iter().chain(&report.fluxes).cloned().collect();
    write_text(&path, &summary_csv(&rows))?;
    rec.add(path);
    rec.write(command, seed, Some(scenario.as_str()), Some(config_path))?;
    Ok(report)
}

pub fn fit(a: &FitArgs) -> Result<(), Failure> {
    let exp = load_experiment(&a.config)?;
    let scenario = a.scenario.unwrap_or(exp.config.scenario);
    let cfg = sampler_config(&exp, &a.sampler);
    cfg.validate()?;
    fit_into(&exp, &a.config, scenario, &cfg, &a.out)?;
    Ok(())
}

pub fn summarize(a: &SummarizeArgs) -> Result<(), Failure> {
    let exp = load_experiment(&a.config)?;
    let chains = import_draws(&a.draws)?;
    let scenario = a.scenario.unwrap_or(exp.config.scenario);
    write_fit_outputs(&exp, &a.config, scenario, exp.config.seed, &chains, &a.out, "summarize")?;
    Ok(())
}

pub fn diagnose(a: &DiagnoseArgs) -> Result<(), Failure> {
    let chains = import_draws(&a.draws)?;
    let mut rec = Recorder::new(&a.out)?;
    let table = rhat_table(&chains)?;
    let mut text = String::from("name,rhat,converged\n");
    for r in &table {
        let v = r.rhat.map_or("NA".to_string(), |v| v.to_string());
        let _ = writeln!(text, "{},{},{}", r.name, v, r.converged);
    }
    let path = rec.path("rhat.csv");
    write_text(&path, &text)?;
    rec.add(path);
    let bad = table.iter().filter(|r| !r.converged).count();
    eprintln!("{bad} of {} coordinates at or above R-hat {RHAT_THRESHOLD}", table.len());

    if let (Some(config), Some(month)) = (&a.config, a.trend_month) {
        let exp = load_experiment(config)?;
        let samples: Vec<(MeasurementType, Vec<TrendSample>)> = MeasurementType::ALL
            .iter()
            .map(|&kind| {
                let locs = exp
                    .plot_table
                    .iter()
                    .zip(&exp.data)
                    .flat_map(|(rec, plot)| {
                        plot.observations
                            .iter()
                            .filter(move |o| o.month == month && o.kind == kind)
                            .map(move |o| TrendSample { x: rec.x, y: rec.y, value: o.value })
                    })
                    .collect();
                (kind, locs)
            })
            .collect();
        let surface = trend_surface_diagnostic(&samples)?;
        let path = rec.path("trend_pairs.csv");
        write_trend_table(&path, &surface)?;
        rec.add(path);
        let path = rec.path("trend_fits.json");
        write_json(&path, &surface.fits)?;
        rec.add(path);
        eprintln!("trend surface fitted at month {month} for {} measurement types", surface.fits.len());
    }
    rec.write("diagnose", 0, None, a.config.as_deref())
}

pub fn sensitivity(a: &SensitivityArgs) -> Result<(), Failure> {
    let exp = load_experiment(&a.config)?;
    let cfg = sampler_config(&exp, &a.sampler);
    cfg.validate()?;
    let mut rec = Recorder::new(&a.out)?;
    let mut text = String::from("scenario,quantity,median,q25,q75,iqr\n");
    for scenario in Scenario::ALL {
        let dir = a.out.join(scenario.as_str());
        let report = fit_into(&exp, &a.config, scenario, &cfg, &dir)?;
        let wanted = |name: &str| name.starts_with("alpha[") || name.starts_with("flux[");
        for r in report.summaries.iter().chain(&report.fluxes).filter(|r| wanted(&r.name)) {
            let _ = writeln!(text, "{scenario},{},{},{},{},{}", r.name, r.median, r.q25, r.q75, r.iqr());
        }
        let manifest = dir.join(crate::manifest::FILE_NAME);
        rec.add(manifest);
    }
    let path = rec.path("comparison.csv");
    write_text(&path, &text)?;
    rec.add(path);
    rec.write("sensitivity", cfg.seed, None, Some(&a.config))
}
