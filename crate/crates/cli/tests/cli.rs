use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    run_env(args, &[])
}

fn run_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_soilcarbon"));
    cmd.args(args).env_remove("SOILCARBON_WORKERS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// File name to contents for every file below `dir`.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn tiny_fit_finishes_within_a_minute() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("fit");
    let start = Instant::now();
    let res = run(&["fit", "--config", s(&fixture("tiny.json")), "--out", s(&out), "--chains", "2", "--iters", "200"]);
    assert!(start.elapsed() < Duration::from_secs(60));
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    assert!(res.stdout.is_empty(), "data goes to files only");
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("chain 1"));
    assert!(stderr.contains("R-hat"));

    for k in 0..2 {
        let text = fs::read_to_string(out.join(format!("draws_chain{k}.csv"))).unwrap();
        assert_eq!(text.lines().count(), 201);
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["scenario"], "N");
    let artifacts = manifest["artifacts"].as_array().unwrap();
    let names: Vec<&str> = artifacts.iter().map(|a| a["path"].as_str().unwrap()).collect();
    assert_eq!(names, ["draws_chain0.csv", "draws_chain1.csv", "report.json", "summary.csv"]);
    for a in artifacts {
        let bytes = fs::read(out.join(a["path"].as_str().unwrap())).unwrap();
        assert_eq!(a["bytes"].as_u64().unwrap(), bytes.len() as u64);
        assert_eq!(a["sha256"].as_str().unwrap().len(), 64);
    }
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn fit_is_bit_reproducible_across_runs_and_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fixture("small.json");
    let fit = |out: &Path, extra: &[&str], env: &[(&str, &str)]| {
        let mut args = vec!["fit", "--config", s(&cfg), "--out", s(out), "--warmup", "60", "--iters", "60"];
        args.extend(extra);
        assert_eq!(code(&run_env(&args, env)), 0);
        snapshot(out)
    };
    let one = fit(&tmp.path().join("a"), &["--workers", "1"], &[]);
    let again = fit(&tmp.path().join("b"), &["--workers", "1"], &[]);
    let four = fit(&tmp.path().join("c"), &["--workers", "4"], &[]);
    let three = fit(&tmp.path().join("d"), &[], &[("SOILCARBON_WORKERS", "3")]);
    assert!(!one.is_empty());
    assert!(one == again, "repeat run");
    assert!(one == four, "1 vs 4 workers");
    assert!(one == three, "1 vs 3 workers from the environment");
}

#[test]
fn sensitivity_writes_each_scenario_and_matches_a_standalone_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fixture("small.json");
    let sens = tmp.path().join("sens");
    let flags = ["--warmup", "40", "--iters", "40", "--seed", "11"];
    let mut args = vec!["sensitivity", "--config", s(&cfg), "--out", s(&sens)];
    args.extend(flags);
    let res = run(&args);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    for sc in ["N", "A", "B"] {
        assert!(sens.join(sc).join("manifest.json").is_file());
        assert!(sens.join(sc).join("draws_chain0.csv").is_file());
    }
    let table = fs::read_to_string(sens.join("comparison.csv")).unwrap();
    assert!(table.starts_with("scenario,quantity,median,q25,q75,iqr\n"));
    for sc in ["N", "A", "B"] {
        for t in ["PP", "Nn0"] {
            assert!(table.contains(&format!("{sc},alpha[{t}],")), "{sc} {t}");
            assert!(table.contains(&format!("{sc},flux[{t}],")));
        }
    }

    let fit = tmp.path().join("fit");
    let mut args = vec!["fit", "--config", s(&cfg), "--out", s(&fit), "--scenario", "N"];
    args.extend(flags);
    assert_eq!(code(&run(&args)), 0);
    assert!(snapshot(&fit) == snapshot(&sens.join("N")));
}

#[test]
fn bad_invocations_exit_with_status_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let cfg = fixture("tiny.json");
    assert_eq!(code(&run(&["fit", "--config", s(&cfg), "--out", s(&out), "--bogus"])), 2);
    assert_eq!(code(&run(&["fit", "--out", s(&out)])), 2);
    assert_eq!(code(&run(&[])), 2);
    assert_eq!(code(&run(&["fit", "--config", s(&cfg), "--out", s(&out), "--scenario", "C"])), 2);
    assert_eq!(code(&run(&["fit", "--config", s(&cfg), "--out", s(&out), "--thin", "0"])), 2);
    assert_eq!(code(&run(&["fit", "--config", s(&fixture("missing.json")), "--out", s(&out)])), 2);
    assert_eq!(code(&run(&["--workers", "0", "fit", "--config", s(&cfg), "--out", s(&out)])), 2);
    assert_eq!(code(&run(&["diagnose", "--draws", s(tmp.path()), "--out", s(&out)])), 2);
}

#[test]
fn help_documents_every_flag() {
    let cases: [(&str, &[&str]); 6] = [
        ("simulate", &["--config", "--out", "--stochastic", "--seed", "--scenario", "--workers"]),
        ("gen-synthetic", &["--config", "--out", "--seed"]),
        ("fit", &["--config", "--out", "--chains", "--warmup", "--iters", "--thin", "--seed", "--scenario", "--workers"]),
        ("diagnose", &["--draws", "--out", "--config", "--trend-month"]),
        ("summarize", &["--draws", "--config", "--out", "--scenario"]),
        ("sensitivity", &["--config", "--out", "--chains", "--warmup", "--iters", "--thin", "--seed"]),
    ];
    for (cmd, flags) in cases {
        let res = run(&[cmd, "--help"]);
        assert_eq!(code(&res), 0);
        let text = String::from_utf8_lossy(&res.stdout);
        for f in flags {
            assert!(text.contains(f), "{cmd} --help lacks {f}");
        }
    }
}

#[test]
fn degenerate_simulation_exits_with_status_three() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("plots.csv"), "id,treatment,area,x,y\np,T,1,0,0\n").unwrap();
    fs::write(dir.join("forcing.csv"), "plot_id,month,P,M,rate_mod\np,1,0,0,1\np,2,0,0,1\n").unwrap();
    let truth = r#"{
      "plots": "plots.csv", "forcing": "forcing.csv",
      "synthetic": {"truth": {
        "params": {
          "rates": {"kappa": [10.0, 0.07, 0.66, 0.66, 0.02], "alpha": {"T": 1.0}},
          "routing": {"p_xf": 0.46, "p_hs": 0.46, "p_clay": 0.16, "r_dpm_rpm": 1.44, "pi_m": [0.49, 0.49, 0.005, 0.005, 0.02]},
          "noise": {"sigma2_process": [0.01, 0.01, 0.01, 0.01, 0.01], "sigma2_meas": [0.01, 0.01, 0.01]}
        },
        "initial": {"p": {"d": 0.0, "r": 0.0, "f": 0.0, "s": 0.0, "h": 0.0, "i": 1.0}}
      }}
    }"#;
    fs::write(dir.join("exp.json"), truth).unwrap();
    let out = dir.join("out");
    let res = run(&["simulate", "--config", s(&dir.join("exp.json")), "--out", s(&out), "--stochastic"]);
    assert_eq!(code(&res), 3, "{}", String::from_utf8_lossy(&res.stderr));
    // The mean dynamics of an empty soil are fine.
    assert_eq!(code(&run(&["simulate", "--config", s(&dir.join("exp.json")), "--out", s(&out)])), 0);
    let text = fs::read_to_string(out.join("trajectories.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn synthetic_data_round_trips_into_a_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        let res = run(&["gen-synthetic", "--config", s(&fixture("small.json")), "--out", s(out), "--seed", "5"]);
        assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    }
    assert!(snapshot(&a) == snapshot(&b));
    let obs = fs::read_to_string(a.join("observations.csv")).unwrap();
    // Six plots, months 0 and 12, three types.
    assert_eq!(obs.lines().count(), 1 + 6 * 2 * 3);

    let fit = tmp.path().join("fit");
    let res = run(&["fit", "--config", s(&a.join("experiment.json")), "--out", s(&fit), "--warmup", "30", "--iters", "30"]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));

    let diag = tmp.path().join("diag");
    let res = run(&[
        "diagnose",
        "--draws",
        s(&fit),
        "--out",
        s(&diag),
        "--config",
        s(&a.join("experiment.json")),
        "--trend-month",
        "12",
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let pairs = fs::read_to_string(diag.join("trend_pairs.csv")).unwrap();
    // 15 pairs of 6 plots for each of 3 types.
    assert_eq!(pairs.lines().count(), 1 + 45);
    assert!(fs::read_to_string(diag.join("rhat.csv")).unwrap().starts_with("name,rhat,converged\n"));

    let summ = tmp.path().join("summ");
    let res = run(&["summarize", "--draws", s(&fit), "--config", s(&a.join("experiment.json")), "--out", s(&summ)]);
    assert_eq!(code(&res), 0);
    let rebuilt: serde_json::Value = serde_json::from_slice(&fs::read(summ.join("report.json")).unwrap()).unwrap();
    let original: serde_json::Value = serde_json::from_slice(&fs::read(fit.join("report.json")).unwrap()).unwrap();
    assert_eq!(rebuilt["summaries"], original["summaries"]);
    assert_eq!(rebuilt["fluxes"], original["fluxes"]);
    assert_eq!(rebuilt["rhat"], original["rhat"]);
}
