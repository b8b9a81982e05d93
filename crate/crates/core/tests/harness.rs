use std::f64::consts::PI;
use std::fs;

use persistx::config::{ExperimentSpec, HorizonSpec};
use persistx::harness::*;
use persistx::model::Innovation;
use persistx::operator::{OperatorOptions, ProcessKind};
use persistx::simulate::Method;
use persistx::ConfigError;

fn spec(process: ProcessKind, coeffs: Vec<f64>, innovation: Innovation) -> ExperimentSpec {
    ExperimentSpec {
        process,
        order: None,
        coeffs,
        innovation,
        initial: None,
        convention: Default::default(),
    }
}

fn splitting(particles: usize, to: usize) -> McSettings {
    McSettings {
        method: Method::Splitting,
        samples: particles,
        horizons: HorizonSpec::Range { from: 1, to, step: 1 },
        seed: None,
        window: None,
    }
}

#[test]
fn ar1_uniform_routes_agree() {
    let case = CompareCase {
        name: "ar1".into(),
        spec: spec(ProcessKind::Ar, vec![-1.0], Innovation::uniform(-1.0, 1.0).unwrap()),
        operator: Some(OperatorOptions::default()),
        mc: Some(splitting(10_000, 50)),
        tolerances: Tolerances::default(),
    };
    let r = compare(&case, 3).unwrap();
    assert!(r.pass, "{:#?}", r.checks);
    assert!((r.oracle.as_ref().unwrap().exponent - 1.0 / PI).abs() < 1e-15);
    assert!(r.diffs.oracle_operator.unwrap() <= 1e-3);
    let mc = r.mc.unwrap();
    assert!((mc.lambda.unwrap() - 1.0 / PI).abs() <= (3.0 * mc.half_width.unwrap()).max(5e-3));
}

#[test]
fn ma1_exponential_routes_within_a_percent() {
    let case = CompareCase {
        name: "ma-exp".into(),
        spec: spec(ProcessKind::Ma, vec![-0.5], Innovation::Exponential),
        operator: Some(OperatorOptions::default()),
        mc: Some(splitting(10_000, 40)),
        tolerances: Tolerances::default(),
    };
    let r = compare(&case, 1).unwrap();
    assert!(r.pass);
    for v in [r.oracle.unwrap().exponent, r.operator.unwrap().spectrum.lambda, r.mc.unwrap().lambda.unwrap()] {
        assert!((v - 0.5).abs() < 1e-2, "{v}");
    }
}

#[test]
fn degenerate_case_is_tagged_and_decreasing() {
    let case = CompareCase {
        name: "degenerate".into(),
        spec: spec(ProcessKind::Ma, vec![-1.0], Innovation::gaussian(1.0).unwrap()),
        operator: Some(OperatorOptions {
            m: Some(4.0),
            n: Some(120),
            ..Default::default()
        }),
        mc: Some(McSettings {
            method: Method::Crude,
            samples: 200_000,
            horizons: HorizonSpec::Range { from: 0, to: 6, step: 1 },
            seed: None,
            window: None,
        }),
        tolerances: Tolerances::default(),
    };
    let r = compare(&case, 5).unwrap();
    assert_eq!(r.tags, vec!["degenerate, β=0".to_string()]);
    let coarse = r.operator.as_ref().unwrap().spectrum.lambda;
    let fine = r.operator_refined.as_ref().unwrap().spectrum.lambda;
    assert!(fine < coarse);
    assert!(r.checks.iter().any(|c| c.name == "mc_window_slope_decreasing" && c.pass));
    assert!(r.pass, "{:#?}", r.checks);
}

#[test]
fn missing_oracle_is_not_an_error() {
    let case = CompareCase {
        name: "ar2".into(),
        spec: spec(ProcessKind::Ar, vec![0.2, 0.1], Innovation::gaussian(1.0).unwrap()),
        operator: Some(OperatorOptions {
            n: Some(40),
            ..Default::default()
        }),
        mc: Some(splitting(20_000, 40)),
        tolerances: Tolerances::default(),
    };
    let r = compare(&case, 2).unwrap();
    assert!(r.oracle.is_none());
    assert!(r.diffs.operator_mc.is_some());
    assert!(r.pass, "{:#?}", r.checks);
}

#[test]
fn unsupported_regime_is_labelled() {
    let case = CompareCase {
        name: "odd".into(),
        spec: spec(ProcessKind::Ar, vec![1.5, -0.8], Innovation::gaussian(1.0).unwrap()),
        operator: None,
        mc: Some(splitting(2_000, 10)),
        tolerances: Tolerances::default(),
    };
    let r = compare(&case, 2).unwrap();
    assert!(r.tags.contains(&"unsupported regime — exploratory".to_string()));
}

#[test]
fn rademacher_skips_operator_with_a_note() {
    let case = CompareCase {
        name: "rad".into(),
        spec: spec(ProcessKind::Ma, vec![1.0], Innovation::Rademacher),
        operator: Some(OperatorOptions::default()),
        mc: Some(McSettings {
            method: Method::Crude,
            samples: 100_000,
            horizons: HorizonSpec::List(vec![0, 1, 2, 3]),
            seed: None,
            window: None,
        }),
        tolerances: Tolerances::default(),
    };
    let r = compare(&case, 4).unwrap();
    assert!(r.operator.is_none());
    assert!(r.notes.iter().any(|n| n.contains("operator route not applicable")));
    assert!(r.checks.iter().any(|c| c.name == "mc_pn_std_errs_from_exact" && c.pass));
}

#[test]
fn one_point_grid_and_constant_path_pass() {
    let base = spec(ProcessKind::Ar, vec![0.2], Innovation::gaussian(1.0).unwrap());
    let opts = OperatorOptions {
        n: Some(150),
        ..Default::default()
    };
    let m = monotonicity_sweep("one", &base, &[vec![0.2]], &opts, 1e-5, None).unwrap();
    assert!(m.pass && m.steps.is_empty());
    let c = continuity_sweep("flat", &base, &[vec![0.2], vec![0.2]], &[0.2], &opts, 1e-3, None).unwrap();
    assert!(c.pass);
    assert!(c.steps.iter().all(|&g| g == 0.0));
}

#[test]
fn monotonicity_preconditions() {
    let base = spec(ProcessKind::Ar, vec![0.2], Innovation::gaussian(1.0).unwrap());
    let opts = OperatorOptions::default();
    for grid in [vec![vec![0.3], vec![0.2]], vec![vec![-0.1], vec![0.2]], vec![vec![0.6], vec![1.2]]] {
        let err = monotonicity_sweep("bad", &base, &grid, &opts, 1e-5, None).unwrap_err();
        assert!(matches!(err, HarnessError::Precondition(_)), "{grid:?}");
    }
}

#[test]
fn empty_suite_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SuiteConfig::from_json(r#"{"cases": []}"#).unwrap();
    let out = run_suite(&cfg, dir.path()).unwrap();
    assert!(out.pass() && out.reports.is_empty());
    let csv = fs::read_to_string(out.summary).unwrap();
    assert_eq!(csv.lines().count(), 1);
    assert!(csv.starts_with("case,kind,"));
}

#[test]
fn config_errors() {
    let err = SuiteConfig::from_json(r#"{"cases":[{"case":"frobnicate","name":"x"}]}"#).unwrap_err();
    assert!(err.to_string().contains("frobnicate"));
    let err = SuiteConfig::from_json("{\"cases\": [\n{\"case\": \"compare\", \"name\": 3}]}").unwrap_err();
    assert!(matches!(err, ConfigError::Parse { line: 2, .. }), "{err}");
    let dup = r#"{"cases":[
        {"case":"property","name":"a","property":"log_concave","innovations":[{"kind":"exponential"}]},
        {"case":"property","name":"a","property":"log_concave","innovations":[{"kind":"exponential"}]}]}"#;
    assert!(matches!(SuiteConfig::from_json(dup), Err(ConfigError::Invalid(_))));
}

const SMALL_SUITE: &str = r#"{
  "seed": 17,
  "cases": [
    {"case": "compare", "name": "ma exp", "spec": {"process": "ma", "coeffs": [-0.5], "innovation": {"kind": "exponential"}},
     "operator": {"n": 200},
     "mc": {"method": "splitting", "samples": 4000, "horizons": {"from": 1, "to": 30}},
     "tolerances": {"oracle_operator": 1e-3, "oracle_mc": 2e-2}},
    {"case": "property", "name": "det", "property": "seed_determinism",
     "specs": [{"process": "ar", "coeffs": [0.3], "innovation": {"kind": "gaussian", "sd": 1}}],
     "mc": {"samples": 20000, "horizons": [1, 2, 4]}, "operator": {"n": 100}},
    {"case": "property", "name": "broken", "property": "q_dependence",
     "specs": [{"process": "ma", "coeffs": [1], "innovation": {"kind": "gaussian", "sd": 1}}]}
  ]
}"#;

fn strip_wall_times(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(map) => {
            map.retain(|k, _| !k.starts_with("wall_time"));
            map.values_mut().for_each(strip_wall_times);
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(strip_wall_times),
        _ => {}
    }
}

#[test]
fn suite_reports_are_reproducible_and_failures_counted() {
    let cfg = SuiteConfig::from_json(SMALL_SUITE).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_suite(&cfg, a.path()).unwrap();
    let rb = run_suite(&cfg, b.path()).unwrap();
    assert_eq!(ra.files.len(), 3);
    assert!(ra.reports[0].pass() && ra.reports[1].pass());
    // q_dependence without mc settings is a failed case, not a crash
    assert!(!ra.reports[2].pass());
    assert!(!ra.pass());
    for (fa, fb) in ra.files.iter().zip(&rb.files) {
        let mut va: serde_json::Value = serde_json::from_str(&fs::read_to_string(fa).unwrap()).unwrap();
        let mut vb: serde_json::Value = serde_json::from_str(&fs::read_to_string(fb).unwrap()).unwrap();
        strip_wall_times(&mut va);
        strip_wall_times(&mut vb);
        assert_eq!(va, vb, "{}", fa.display());
    }
    let summary = fs::read_to_string(&ra.summary).unwrap();
    assert_eq!(summary, fs::read_to_string(&rb.summary).unwrap());
    assert!(summary.lines().nth(3).unwrap().ends_with(",false"));
}

#[test]
fn report_differences_are_recomputable() {
    let cfg = SuiteConfig::from_json(SMALL_SUITE).unwrap();
    let SuiteCase::Compare(case) = &cfg.cases[0] else { panic!() };
    let r = compare(case, cfg.seed).unwrap();
    let v = serde_json::to_value(&r).unwrap();
    let oracle = v["oracle"]["exponent"].as_f64().unwrap();
    let op = v["operator"]["lambda"].as_f64().unwrap();
    let mc = v["mc"]["lambda"].as_f64().unwrap();
    assert_eq!(v["diffs"]["oracle_operator"].as_f64().unwrap(), (oracle - op).abs());
    assert_eq!(v["diffs"]["oracle_mc"].as_f64().unwrap(), (oracle - mc).abs());
    assert_eq!(v["diffs"]["operator_mc"].as_f64().unwrap(), (op - mc).abs());
}
