use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn persistx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_persistx")).args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn oracle_ma1_exponential() {
    let v = json(&persistx(&["oracle", "--case", "ma1-exponential", "--a1=-0.5"]));
    assert_eq!(v["exponent"], 0.5);
    assert_eq!(v["case"], "ma1-exponential");
    assert_eq!(v["parameters"]["a1"], -0.5);
}

#[test]
fn oracle_tables_and_missing_parameters() {
    let v = json(&persistx(&["oracle", "--case", "degenerate-ma", "--coeffs=-1", "--n", "4"]));
    let pn: Vec<f64> = v["pn"].as_array().unwrap().iter().map(|r| r["p"].as_f64().unwrap()).collect();
    assert_eq!(pn.len(), 5);
    assert!((pn[4] - 1.0 / 720.0).abs() < 1e-18);
    let out = persistx(&["oracle", "--case", "ar1-uniform", "--a", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing field `b`"));
}

#[test]
fn missing_value_is_a_usage_error() {
    let out = persistx(&["simulate", "--coeffs"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--coeffs <A1,A2,...>"), "{err}");
}

#[test]
fn bad_innovation_names_the_grammar() {
    let out = persistx(&["simulate", "--coeffs=0.5", "--innovation", "cauchy:1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--innovation") && err.contains("uniform:LO,HI"), "{err}");
}

#[test]
fn simulate_ar1_uniform_near_one_over_pi() {
    let args = [
        "simulate", "--process", "ar", "--coeffs=-1", "--innovation", "uniform:-1,1", "--init", "iid", "--n", "40",
        "--reps", "1000000", "--seed", "7",
    ];
    let v = json(&persistx(&args));
    let lam = v["lambda"].as_f64().unwrap();
    let hw = v["half_width"].as_f64().unwrap();
    assert!((lam - 1.0 / std::f64::consts::PI).abs() < 3.0 * hw, "{lam} ± {hw}");
}

#[test]
fn seed_and_threads_determine_output() {
    let args = ["simulate", "--coeffs=0.3", "--method", "splitting", "--reps", "3000", "--n", "15", "--seed", "3"];
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_persistx"))
            .args(args)
            .env("PERSISTX_THREADS", threads)
            .output()
            .unwrap()
    };
    let one = run("1");
    assert!(one.status.success());
    assert_eq!(one.stdout, run("4").stdout);
    let flag = persistx(&[&["--threads", "2"], &args[..]].concat());
    assert_eq!(one.stdout, flag.stdout);
}

#[test]
fn operator_writes_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("op.json");
    let csv = dir.path().join("psi.csv");
    let status = persistx(&[
        "operator",
        "--process",
        "ma",
        "--coeffs=1",
        "--innovation",
        "gaussian:1",
        "--m",
        "8",
        "--nodes",
        "200",
        "--out",
        out.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let lam = v["operator"]["lambda"].as_f64().unwrap();
    assert!((lam - 2.0 / std::f64::consts::PI).abs() < 1e-3);
    assert_eq!(v["operator"]["grid"]["N"], 200);
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 200);
}

#[test]
fn spec_file_and_f32() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, r#"{"process":"ma","order":1,"coeffs":[-0.5],"innovation":{"kind":"exponential"}}"#).unwrap();
    let v = json(&persistx(&["operator", "--spec", spec.to_str().unwrap(), "--nodes", "300", "--precision", "f32"]));
    assert!((v["operator"]["lambda"].as_f64().unwrap() - 0.5).abs() < 1e-3);
    fs::write(&spec, r#"{"process":"ma","order":2,"coeffs":[-0.5],"innovation":{"kind":"exponential"}}"#).unwrap();
    let out = persistx(&["operator", "--spec", spec.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compare_single_model() {
    let v = json(&persistx(&[
        "compare", "--process", "ma", "--coeffs=-0.5", "--innovation", "exponential", "--nodes", "300", "--method",
        "splitting", "--reps", "5000", "--n", "30",
    ]));
    assert_eq!(v["pass"], true);
    assert_eq!(v["oracle"]["case"], "ma1-exponential");
}

#[test]
fn compare_config_runs_suite() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("suite.json");
    let out = dir.path().join("reports");
    fs::write(
        &cfg,
        r#"{"cases": [
            {"case": "property", "name": "lc", "property": "log_concave", "innovations": [{"kind": "gaussian", "sd": 1}]},
            {"case": "monotonicity", "name": "mono", "spec": {"process": "ar", "coeffs": [0], "innovation": {"kind": "gaussian", "sd": 1}},
             "grid": [[0], [0.2]], "operator": {"n": 100}}
        ]}"#,
    )
    .unwrap();
    let run = persistx(&["compare", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(out.join("summary.csv").exists());
    assert!(out.join("01-lc.json").exists() && out.join("02-mono.json").exists());

    fs::write(&cfg, r#"{"cases": [{"case": "property", "name": "q", "property": "q_dependence"}]}"#).unwrap();
    let run = persistx(&["compare", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(1));

    fs::write(&cfg, "{\"cases\": [\n {\"case\": \"wibble\"}]}").unwrap();
    let run = persistx(&["compare", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(2));
    let err = String::from_utf8_lossy(&run.stderr);
    assert!(err.contains("wibble") && err.contains("line 2"), "{err}");
}

#[test]
fn sweeps() {
    let v = json(&persistx(&[
        "sweep", "--kind", "monotonicity", "--coeffs=0", "--points", "0;0.25;0.5", "--nodes", "200",
    ]));
    assert_eq!(v["pass"], true);
    assert_eq!(v["points"].as_array().unwrap().len(), 3);
    let v = json(&persistx(&[
        "sweep", "--kind", "convergence", "--process", "ma", "--coeffs=1", "--ms", "4,6", "--ns", "100,200",
    ]));
    assert_eq!(v["convergence"]["entries"].as_array().unwrap().len(), 4);
    let out = persistx(&["sweep", "--kind", "monotonicity", "--coeffs=0", "--points", "0.5;0.1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_documents_defaults() {
    for sub in ["simulate", "operator", "oracle", "compare", "sweep"] {
        let out = persistx(&[sub, "--help"]);
        assert!(out.status.success());
        let text = String::from_utf8_lossy(&out.stdout);
        assert!(text.contains("--threads"), "{sub}");
        if sub != "oracle" {
            assert!(text.contains("[default: gaussian:1]"), "{sub}: {text}");
        }
    }
    let text = String::from_utf8_lossy(&persistx(&["simulate", "--help"]).stdout).to_string();
    for flag in ["--reps", "--seed", "--method", "--window", "--init", "--convention", "--out", "--csv"] {
        assert!(text.contains(flag), "{flag}");
    }
    assert!(text.contains("PERSISTX_THREADS"));
}
