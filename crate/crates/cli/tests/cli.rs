use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gammavol::inference::credible_band;
use gammavol::PriorSpec;
use serde_json::Value;
use tempfile::TempDir;

fn gammavol(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gammavol"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&read(p)).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small scaled-sine simulation: n = 500, ten levels up to 1.
fn simulate_example(dir: &Path, seed: &str) -> Output {
    gammavol(&[
        "simulate",
        "--seed",
        seed,
        "--out",
        s(dir),
        "--n",
        "500",
        "--dt",
        "0.01",
        "--record-every",
        "1",
        "--set",
        "volatility.scale=1",
    ])
}

#[test]
fn simulate_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = simulate_example(d, "11");
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["path.csv", "hitting_record.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
    let path = read(&a.join("path.csv"));
    assert!(path.starts_with("t,x\n0.0,0.0\n"));
    let rec = read(&a.join("hitting_record.csv"));
    let lines: Vec<&str> = rec.lines().collect();
    assert_eq!(lines[0], "k,tau,x_at_tau,overshoot");
    assert_eq!(lines.len(), 11);
    let last: f64 = path.lines().last().unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!(last >= 1.0);
}

#[test]
fn thinned_path_keeps_final_point() {
    let tmp = TempDir::new().unwrap();
    let o = gammavol(&[
        "simulate", "--seed", "3", "--out", s(tmp.path()), "--n", "1", "--dt", "0.001", "--stop-level", "0.2",
        "--bins", "2", "--record-every", "7", "--set", "volatility.scale=1",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let path = read(&tmp.path().join("path.csv"));
    let last: f64 = path.lines().last().unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!(last >= 0.2);
    let rec = read(&tmp.path().join("hitting_record.csv"));
    let x_k: f64 = rec.lines().last().unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(x_k, last);
}

#[test]
fn simulate_validates_before_running() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"seed": 1, "volatility": {"type": "piecewise", "boundaries": [0, 0.5, 1], "values": [1, 2]}, "stop_level": 2}"#,
    )
    .unwrap();
    let out = tmp.path().join("out");
    let o = gammavol(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(!out.join("path.csv").exists());

    let o = gammavol(&["simulate", "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("seed"));

    let o = gammavol(&["simulate", "--seed", "1", "--out", s(&out), "--set", "nonsense=3"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn step_budget_is_a_numerical_failure() {
    let tmp = TempDir::new().unwrap();
    let o = gammavol(&["simulate", "--seed", "1", "--out", s(tmp.path()), "--max-steps", "10"]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn fit_example_two_configuration() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    assert_eq!(code(&simulate_example(&sim, "5")), 0);
    let out = tmp.path().join("fit");
    let rec = sim.join("hitting_record.csv");
    let o = gammavol(&["fit", "--input", s(&rec), "--n", "500", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let bands = read(&out.join("bands.csv"));
    let lines: Vec<&str> = bands.lines().collect();
    assert_eq!(lines[0], "bin,lo,median,hi,mean");
    assert_eq!(lines.len(), 11);
    for l in &lines[1..] {
        let v: Vec<f64> = l.split(',').skip(1).map(|x| x.parse().unwrap()).collect();
        assert!(v[0] < v[1] && v[1] < v[2]);
        // the truth 3/2 + sin(2πx) lies within [0.5, 2.5]
        assert!(v[2] > 0.3 && v[0] < 3.0, "{l}");
    }
    let post = json(&out.join("posterior.json"));
    assert_eq!(post["schema"], "gammavol.posterior/1");
    assert_eq!(post["posterior"]["shape"].as_array().unwrap().len(), 10);

    // the full path gives the same record and therefore the same bands
    let out2 = tmp.path().join("fit2");
    let o = gammavol(&["fit", "--input", s(&sim.join("path.csv")), "--n", "500", "--out", s(&out2)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(bands, read(&out2.join("bands.csv")));
}

#[test]
fn prior_only_fit_returns_prior_quantiles() {
    let tmp = TempDir::new().unwrap();
    let rec = tmp.path().join("empty.csv");
    fs::write(&rec, "k,tau,x_at_tau,overshoot\n").unwrap();
    let o = gammavol(&[
        "fit", "--input", s(&rec), "--k", "3", "--prior-alpha", "3", "--prior-beta", "2", "--out", s(tmp.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let expected = credible_band(&PriorSpec::uniform(3, 3.0, 2.0).unwrap().as_posterior(), 0.9).unwrap();
    let mut buf = Vec::new();
    gammavol::io::write_bands(&mut buf, &expected).unwrap();
    assert_eq!(read(&tmp.path().join("bands.csv")), String::from_utf8(buf).unwrap());
    assert_eq!(json(&tmp.path().join("posterior.json"))["empty_bins"], serde_json::json!([1, 2, 3]));

    let o = gammavol(&["fit", "--input", s(&rec), "--out", s(tmp.path())]);
    assert_eq!(code(&o), 2);
}

#[test]
fn malformed_input_names_the_line() {
    let tmp = TempDir::new().unwrap();
    let rec = tmp.path().join("bad.csv");
    fs::write(&rec, "k,tau,x_at_tau,overshoot\n1,2.0,0.1,0.0\n2,oops,0.2,0.0\n").unwrap();
    let o = gammavol(&["fit", "--input", s(&rec), "--out", s(tmp.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let o = gammavol(&["fit", "--input", s(&tmp.path().join("missing.csv")), "--out", s(tmp.path())]);
    assert_eq!(code(&o), 3);

    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, "{\n  \"n\": 3,\n  oops\n}").unwrap();
    let o = gammavol(&["fit", "--config", s(&cfg), "--out", s(tmp.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

fn observations(dir: &Path) -> std::path::PathBuf {
    let sim = dir.join("sim");
    let o = gammavol(&[
        "simulate", "--seed", "21", "--out", s(&sim), "--n", "50", "--dt", "0.01", "--bins", "4", "--record-every",
        "50", "--set", "volatility.scale=1",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    sim.join("path.csv")
}

#[test]
fn fit_discrete_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let obs = observations(tmp.path());
    let run = |out: &Path| {
        gammavol(&[
            "fit-discrete", "--input", s(&obs), "--seed", "4", "--k", "4", "--n", "50", "--iterations", "300",
            "--burn-in", "100", "--set", "upper=1", "--out", s(out),
        ])
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = run(d);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["chain.csv", "summary.json", "bands.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let chain = read(&a.join("chain.csv"));
    assert!(chain.starts_with("iter,bin,xi\n0,1,"));
    assert_eq!(chain.lines().count(), 1 + 200 * 4);
    let summary = json(&a.join("summary.json"));
    assert_eq!(summary["schema"], "gammavol.chain-summary/1");
    let acc = summary["chains"][0]["acceptance"].as_array().unwrap();
    assert_eq!(acc.len(), 4);
    assert!(acc.iter().all(|a| a.is_null() || (0.0..=1.0).contains(&a.as_f64().unwrap())));

    let o = gammavol(&["fit-discrete", "--input", s(&obs), "--k", "4", "--out", s(&a)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn parallel_chains_report_scale_reduction() {
    let tmp = TempDir::new().unwrap();
    let obs = observations(tmp.path());
    let out = tmp.path().join("out");
    let o = gammavol(&[
        "fit-discrete", "--input", s(&obs), "--seed", "4", "--k", "4", "--n", "50", "--iterations", "200",
        "--burn-in", "50", "--chains", "3", "--threads", "2", "--set", "upper=1", "--out", s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(out.join("chain_2.csv").exists());
    let psrf = &json(&out.join("summary.json"))["potential_scale_reduction"];
    assert_eq!(psrf.as_array().unwrap().len(), 4);
}

fn series_file(dir: &Path) -> std::path::PathBuf {
    let mut text = String::from("t,y\n");
    let mut y: f64 = 0.0;
    let mut state: u64 = 12345;
    for i in 0..2000 {
        text.push_str(&format!("{},{y}\n", 50 * i));
        // xorshift noise with unit-scale increments
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        y += (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
    }
    let p = dir.join("series.csv");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn rqv_defaults_and_calibration() {
    let tmp = TempDir::new().unwrap();
    let series = series_file(tmp.path());
    let out = tmp.path().join("out");
    let o = gammavol(&["rqv", "--input", s(&series), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let cal = json(&out.join("calibration.json"));
    assert_eq!(cal["schema"], "gammavol.rqv-calibration/1");
    assert_eq!(cal["alpha"], 0.01);
    assert_eq!(cal["dt"], 50.0);
    assert_eq!(cal["m"], 1999);
    assert_eq!(cal["k"], 20);
    let beta = cal["beta"].as_f64().unwrap();
    let c = cal["c"].as_f64().unwrap();
    assert_eq!(beta, c / 100.0);
    assert_eq!(read(&out.join("bands.csv")).lines().count(), 21);
    let post = json(&out.join("posterior.json"));
    assert_eq!(post["prior"]["alpha"][0], 0.1);

    let o = gammavol(&["rqv", "--input", s(&series), "--mcmc", "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    let mc = tmp.path().join("mc");
    let o = gammavol(&[
        "rqv", "--input", s(&series), "--mcmc", "--seed", "2", "--k", "4", "--set", "chain.iterations=200",
        "--set", "chain.burn_in=50", "--set", "chain.grid_points=32", "--out", s(&mc),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(read(&mc.join("chain.csv")).lines().count(), 1 + 150 * 4);
}

#[test]
fn rqv_rejects_constant_and_gappy_series() {
    let tmp = TempDir::new().unwrap();
    let flat = tmp.path().join("flat.csv");
    fs::write(&flat, "t,y\n0,1\n1,1\n2,1\n").unwrap();
    let o = gammavol(&["rqv", "--input", s(&flat), "--out", s(tmp.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("degenerate"));
    let gappy = tmp.path().join("gappy.csv");
    fs::write(&gappy, "t,y\n0,1\n1,2\n3,1\n").unwrap();
    let o = gammavol(&["rqv", "--input", s(&gappy), "--out", s(tmp.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 4"));
}

#[test]
fn contraction_experiment() {
    let tmp = TempDir::new().unwrap();
    let o = gammavol(&["experiment-contraction", "--seed", "1", "--n-values", "100", "--out", s(tmp.path())]);
    assert_eq!(code(&o), 2);
    let o = gammavol(&["experiment-contraction", "--n-values", "10,20,40", "--out", s(tmp.path())]);
    assert_eq!(code(&o), 2);

    let run = |out: &Path| {
        gammavol(&[
            "experiment-contraction", "--seed", "9", "--n-values", "20,40,80", "--replicates", "3", "--set",
            "dt_fraction=0.01", "--out", s(out),
        ])
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = run(d);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let table = read(&a.join("contraction.csv"));
    assert_eq!(table, read(&b.join("contraction.csv")));
    assert!(table.starts_with("n,k,dt,mean_sup_error,rmse,mean_posterior_sd\n20,10,"));
    assert_eq!(table.lines().count(), 4);
    let rep = json(&a.join("contraction.json"));
    assert_eq!(rep["schema"], "gammavol.contraction/1");
    assert!(rep["slope"].as_f64().unwrap().is_finite());
    assert_eq!(rep["seed"], 9);
}

#[test]
fn coverage_experiment() {
    let tmp = TempDir::new().unwrap();
    let o = gammavol(&["experiment-coverage", "--seed", "1", "--replicates", "0", "--out", s(tmp.path())]);
    assert_eq!(code(&o), 2);
    let o = gammavol(&[
        "experiment-coverage", "--seed", "1", "--replicates", "20", "--n", "50", "--k", "4", "--out", s(tmp.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = read(&tmp.path().join("coverage.csv"));
    assert!(table.starts_with("bin,coverage\n1,"));
    assert_eq!(table.lines().count(), 5);
    let rep = json(&tmp.path().join("coverage.json"));
    assert_eq!(rep["schema"], "gammavol.coverage/1");
    assert_eq!(rep["per_bin"].as_array().unwrap().len(), 4);
}

#[test]
fn verify_report() {
    let tmp = TempDir::new().unwrap();
    let o = gammavol(&[
        "verify", "--seed", "3", "--replicates", "100", "--set", "hitting.n=50", "--set", "overshoot.n=50", "--out",
        s(tmp.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rep = json(&tmp.path().join("verify.json"));
    assert_eq!(rep["schema"], "gammavol.verify/1");
    assert_eq!(rep["hitting"]["replicates"], 100);
    assert!((rep["hitting"]["expected"].as_f64().unwrap() - 50.0 * 0.1 / 1.5).abs() < 1e-12);
    assert_eq!(rep["overshoot"]["levels"].as_array().unwrap().len(), 10);
    assert!(rep["overshoot_consistent"].is_boolean());
}
