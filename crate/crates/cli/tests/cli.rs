use std::path::Path;
use std::process::{Command, Output};

fn mckv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mckv")).args(args).output().expect("mckv runs")
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn self_similar_scenario_meets_its_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let out = mckv(&["run", "--scenario", "selfsim_oracle", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let err = summary(dir.path())["oracle_error"].as_f64().unwrap();
    assert!(err < 0.01, "{err}");
    let series = std::fs::read_to_string(dir.path().join("series.csv")).unwrap();
    assert!(series.starts_with("t,N,s,mass,jump_indicator\n"));
}

#[test]
fn gamma_blowup_scenario_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = mckv(&["run", "--scenario", "gamma_alpha4_blowup", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let s = summary(dir.path());
    assert!(s["solver_event"]["t"].as_f64().unwrap() < 2.773);
    let verdict = std::fs::read_to_string(dir.path().join("verdict.csv")).unwrap();
    let mut lines = verdict.lines();
    assert_eq!(lines.next(), Some("model,alpha,beta,kind,T_bound,witness_mu,witness_x"));
    assert!(lines.next().unwrap().starts_with("linear,"));
}

#[test]
fn missing_alpha_is_a_configuration_error_with_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(
        &cfg,
        r#"{"version":1,"name":"bad","model":{"kind":"linear"},"initial":{"kind":"point","x0":1},"horizon":1,"criteria":{}}"#,
    )
    .unwrap();
    let out = mckv(&["criteria", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("model") && err.contains("alpha"), "{err}");
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(mckv(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(mckv(&["run"]).status.code(), Some(1));
    assert_eq!(mckv(&["--help"]).status.code(), Some(0));
}

#[test]
fn delta_sweep_reproduces_the_dichotomy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("delta.json");
    std::fs::write(
        &cfg,
        r#"{"version":1,"name":"d","model":{"kind":"linear","alpha":1},"initial":{"kind":"point","x0":1},"horizon":1,"criteria":{}}"#,
    )
    .unwrap();
    let out = mckv(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--param",
        "alpha",
        "--values",
        "0.5,1.5,2.5",
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let table = std::fs::read_to_string(dir.path().join("o/sweep.csv")).unwrap();
    let verdicts: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(verdicts, ["no_blowup", "indeterminate", "blowup"]);
    assert_eq!(String::from_utf8_lossy(&out.stdout), table);

    let empty = mckv(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--param",
        "alpha",
        "--values",
        "--out",
        dir.path().join("e").to_str().unwrap(),
    ]);
    assert_eq!(empty.status.code(), Some(1));
}

#[test]
fn log_sweep_budget_slope_falls_with_beta() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("log.json");
    std::fs::write(
        &cfg,
        r#"{"version":1,"name":"l","model":{"kind":"log","alpha":0.05,"beta":2},"initial":{"kind":"gamma_shape2","rate":1},
            "horizon":2,"solver":{"h":0.04,"dt":8e-4,"x_max":60}}"#,
    )
    .unwrap();
    let out = mckv(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--param",
        "beta",
        "--values",
        "2,4,8",
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let table = std::fs::read_to_string(dir.path().join("o/sweep.csv")).unwrap();
    let slopes: Vec<f64> = table.lines().skip(1).map(|l| l.split(',').nth(4).unwrap().parse().unwrap()).collect();
    assert!(slopes.windows(2).all(|w| w[1] < w[0]), "{slopes:?}");
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str, name: &str| {
        let out_dir = dir.path().join(name);
        let out = mckv(&[
            "--threads",
            threads,
            "compare",
            "--scenario",
            "delta",
            "--seed",
            "4",
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        ["series.csv", "empirical.csv"].map(|f| std::fs::read(out_dir.join(f)).unwrap())
    };
    let one = run("1", "a");
    assert_eq!(one, run("4", "b"));
    assert_eq!(one, run("1", "c"));
}

#[test]
fn listing_and_showing_bundled_scenarios() {
    let out = mckv(&["scenarios"]);
    let names = String::from_utf8(out.stdout).unwrap();
    for name in ["selfsim_oracle", "gamma_alpha4_blowup", "delta", "log"] {
        assert!(names.lines().any(|l| l == name));
        let shown = mckv(&["show", name]);
        let doc: serde_json::Value = serde_json::from_slice(&shown.stdout).unwrap();
        assert_eq!(doc["name"], name);
    }
    assert_eq!(mckv(&["show", "missing"]).status.code(), Some(1));
}
