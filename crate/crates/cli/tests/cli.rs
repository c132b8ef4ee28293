use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_compsketch"));
    cmd.env_remove("COMPSKETCH_THREADS");
    cmd
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("bad JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn null_fixture_args(x2: &str) -> Vec<String> {
    vec![
        "test".into(),
        "--x1".into(),
        fixture("null_x1.csv").display().to_string(),
        "--y1".into(),
        fixture("null_y1.csv").display().to_string(),
        "--x2".into(),
        fixture(x2).display().to_string(),
        "--y2".into(),
        fixture("null_y2.csv").display().to_string(),
    ]
}

#[test]
fn noiseless_null_fixture_is_accepted() {
    let args = null_fixture_args("null_x2.csv");
    let out = bin().args(&args).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    let outcomes = v["outcomes"].as_array().unwrap();
    assert_eq!(outcomes.len(), 2);
    for o in outcomes {
        assert_eq!(o["reject"], false, "{o}");
    }
    assert_eq!(outcomes[0]["method"], "sparse");
    assert_eq!(outcomes[1]["method"], "dense");
}

#[test]
fn all_methods_including_lrt() {
    let mut args = null_fixture_args("null_x2.csv");
    args.extend(["--method".into(), "sparse,dense,lrt".into(), "--sigma".into(), "1".into()]);
    let out = bin().args(&args).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["sigma_source"], "oracle");
    let lrt = &v["outcomes"][2];
    assert_eq!(lrt["method"], "lrt");
    assert_eq!(lrt["reject"], false);
    assert_eq!(lrt["p_value"], 1.0);
}

#[test]
fn mismatched_columns_exit_two_naming_both() {
    let args = null_fixture_args("narrow_x2.csv");
    let out = bin().args(&args).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains('4') && err.contains('3'), "{err}");
}

#[test]
fn header_flag_skips_first_line() {
    let dir = tempfile::tempdir().unwrap();
    let copy = |name: &str| {
        let body = std::fs::read_to_string(fixture(name)).unwrap();
        let path = dir.path().join(name);
        std::fs::write(&path, format!("h\n{body}")).unwrap();
        path.display().to_string()
    };
    let files = ["null_x1.csv", "null_y1.csv", "null_x2.csv", "null_y2.csv"].map(copy);
    let base = ["test", "--x1", &files[0], "--y1", &files[1], "--x2", &files[2], "--y2", &files[3]];
    assert_eq!(run(&base).status.code(), Some(2));
    let mut with_header = base.to_vec();
    with_header.push("--header");
    assert_eq!(run(&with_header).status.code(), Some(0));
}

#[test]
fn missing_file_is_a_data_error() {
    let out = run(&["test", "--x1", "nope.csv", "--y1", "nope.csv", "--x2", "nope.csv", "--y2", "nope.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn theory_nu_matches_hand_evaluation() {
    let out = run(&["theory", "--n1", "500", "--n2", "500", "--p", "400", "--k", "10", "--sigma", "1", "--rho", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    // r = 1, s = 400/600: ν = 1000 / ((5/3)·4·10·ln 400)
    let hand = 1000.0 / ((1.0 + 400.0 / 600.0) * 4.0 * 10.0 * 400f64.ln());
    assert!((v["nu"].as_f64().unwrap() - hand).abs() < 1e-12);
    assert!((v["kappa1"].as_f64().unwrap() - 0.15).abs() < 1e-15);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["theory", "--n1", "5"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["theory", "--n1", "50", "--n2", "50", "--p", "20", "--mode", "theory"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn theory_mode_thresholds_need_k() {
    let out = run(&["theory", "--n1", "50", "--n2", "50", "--p", "20", "--mode", "theory", "--epsilon", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["theory", "--n1", "50", "--n2", "50", "--p", "20", "--k", "2", "--mode", "theory", "--epsilon", "1"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn simulate_writes_schema_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.json");
    std::fs::write(
        &scenario,
        r#"{"design_kind":"gaussian_iid","noise_kind":"gaussian","n1":60,"n2":60,"p":30,"k":3,"rho":2.0,"sigma":1.0,"seed":5}"#,
    )
    .unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let s = scenario.display().to_string();
    for (path, threads) in [(&a, "1"), (&b, "2")] {
        let out = bin()
            .env("COMPSKETCH_THREADS", threads)
            .args(["simulate", "--scenario", &s, "--reps", "20", "--seed", "1", "--out", &path.display().to_string()])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n1,n2,p,k,rho,sigma,design,noise,method,mode,nu,reps,power,mc_se,seed,wall_time_ms"
    );
    assert_eq!(lines.count(), 2);
}

#[test]
fn sequential_run_matches_parallel() {
    let args = ["phase", "--values", "40", "--nu", "0,2", "--reps", "6"];
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("base.json");
    std::fs::write(
        &scenario,
        r#"{"design_kind":"rademacher","noise_kind":"t4_scaled","n1":50,"n2":50,"p":40,"k":2,"rho":0.0,"sigma":1.0,"seed":9}"#,
    )
    .unwrap();
    let s = scenario.display().to_string();
    let par = bin().args(args).args(["--scenario", &s]).output().unwrap();
    let seq = bin().args(args).args(["--scenario", &s, "--sequential"]).output().unwrap();
    assert_eq!(par.status.code(), Some(0), "{}", String::from_utf8_lossy(&par.stderr));
    assert_eq!(par.stdout, seq.stdout);
}

#[test]
fn bad_scenario_json_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.json");
    std::fs::write(&scenario, r#"{"design_kind":"anova","noise_kind":"gaussian","n1":9,"n2":10,"p":5,"k":1,"rho":0,"sigma":1,"seed":0}"#).unwrap();
    let out = run(&["simulate", "--scenario", &scenario.display().to_string(), "--reps", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_thread_cap_is_a_usage_error() {
    let out = bin().env("COMPSKETCH_THREADS", "zero").args(["theory", "--n1", "50", "--n2", "50", "--p", "20"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn spectrum_diagnostics() {
    let out = run(&["spectrum", "beta", "--n1", "60", "--n2", "60", "--p", "40", "--draws", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert!(v["mean_a_l1"].as_f64().unwrap() > 0.0);
    let out = run(&["spectrum", "bartlett", "--n", "10", "--p", "3", "--reps", "40"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["diagonal"].as_array().unwrap().len(), 3);
    let out = run(&["spectrum", "beta", "--n1", "5", "--n2", "5", "--p", "20"]);
    assert_eq!(out.status.code(), Some(2));
}
