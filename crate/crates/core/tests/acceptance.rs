//! Acceptance criteria 1–10. Prints one `[PASS]`/`[FAIL]` line per
//! criterion and exits nonzero if any fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use persistx::harness::{monotonicity_sweep, run_suite, SuiteConfig};
use persistx::model::{ArModel, InitialDistribution, Innovation, MaModel, Model, SurvivalConvention};
use persistx::operator::{self, OperatorOptions};
use persistx::oracle::{
    classify_regime, ma1_symmetric_series, ma1_uniform_exponent, ma1_uniform_root, rademacher_pn,
    rademacher_transfer_pn,
};
use persistx::simulate::{estimate_crude, estimate_splitting, fit_exponent};
use persistx::ExperimentSpec;

// Tolerances, pinned.
const C1_TOL: f64 = 1e-3;
const C2_SE: f64 = 4.0;
const C2_LAMBDA: (f64, f64) = (0.48, 0.52);
const C2_LOG_TOL: f64 = 0.01;
const C3_TOL: f64 = 1e-3;
const C3_SERIES_TOL: f64 = 1e-6;
const C4_RESIDUAL: f64 = 1e-10;
const C4_TOL: f64 = 2e-3;
const C4_BRANCH_TOL: f64 = 1e-10;
const C5_TOL: f64 = 1e-3;
const C5_RESIDUAL: f64 = 1e-6;
const C6_REL: f64 = 1e-12;
const C6_SE: f64 = 4.0;
const C7_SE: f64 = 4.0;
const C8_MIN_INCREMENT: f64 = 1e-4;
const C8_ANCHOR_TOL: f64 = 1e-3;
const C9_FLOOR: f64 = 0.9;

const SEED: u64 = 0x5eed_acce;

struct Outcome {
    pass: bool,
    lines: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self { pass: true, lines: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: String) {
        self.pass &= ok;
        self.lines.push(format!("{} {what}", if ok { "ok  " } else { "FAIL" }));
    }
}

fn gaussian() -> Innovation {
    Innovation::gaussian(1.0).unwrap()
}

fn uniform(lo: f64, hi: f64) -> Innovation {
    Innovation::uniform(lo, hi).unwrap()
}

fn ar(coeffs: Vec<f64>, innovation: Innovation, initial: InitialDistribution) -> Model {
    Model::Ar(ArModel::new(coeffs, innovation, initial, SurvivalConvention::NonNegative).unwrap())
}

fn ar_iid(coeffs: Vec<f64>, innovation: Innovation) -> Model {
    ar(coeffs, innovation, InitialDistribution::Iid { innovation })
}

fn ma(coeffs: Vec<f64>, innovation: Innovation, convention: SurvivalConvention) -> Model {
    Model::Ma(MaModel::new(coeffs, innovation, convention).unwrap())
}

fn lambda(model: &Model, m: f64, n: usize) -> (f64, bool) {
    let opts = OperatorOptions {
        m: Some(m),
        n: Some(n),
        ..Default::default()
    };
    let (_, run) = operator::solve::<f64>(model, &opts).unwrap();
    (run.spectrum.lambda, run.spectrum.converged)
}

fn criterion_1() -> Outcome {
    let mut o = Outcome::new();
    for (a, b, expect) in [(1.0, 1.0, 1.0 / PI), (1.0, 3.0, 6.0 / (4.0 * PI))] {
        // grid [0, b]: the image of a nonnegative state lies in [0, b]
        let (lam, conv) = lambda(&ar_iid(vec![-1.0], uniform(-a, b)), b, 400);
        let err = (lam - expect).abs();
        o.check(conv && err <= C1_TOL, format!("AR(1) U(-{a},{b}) N=400: λ={lam:.10} target {expect:.10} |Δ|={err:.2e}"));
    }
    o
}

fn criterion_2() -> Outcome {
    let mut o = Outcome::new();
    let model = ar(vec![-1.0], Innovation::Exponential, InitialDistribution::Iid { innovation: Innovation::Exponential });
    let horizons: Vec<usize> = (1..=12).collect();
    let est = estimate_crude(&model, &horizons, 1_000_000, SEED).unwrap();
    let worst = horizons
        .iter()
        .enumerate()
        .map(|(i, &n)| (est.p_hat[i] - 0.5f64.powi(n as i32)).abs() / est.std_err[i])
        .fold(0.0, f64::max);
    o.check(worst <= C2_SE, format!("crude R=1e6, n=1..12: max |p̂ₙ − 2⁻ⁿ|/SE = {worst:.2}"));
    let fit = est.exponent.clone().unwrap();
    o.check(
        fit.lambda >= C2_LAMBDA.0 && fit.lambda <= C2_LAMBDA.1,
        format!("fitted λ̂ = {:.4} ± {:.4} (n={}..{})", fit.lambda, fit.half_width, fit.n_first, fit.n_last),
    );
    let split = estimate_splitting(&model, &[100], 100_000, SEED).unwrap();
    let rate = split.p_hat[0].ln() / 100.0;
    o.check(
        (rate - 0.5f64.ln()).abs() <= C2_LOG_TOL,
        format!("splitting P=1e5: log p̂₁₀₀/100 = {rate:.5}, log(1/2) = {:.5}", 0.5f64.ln()),
    );
    o
}

fn criterion_3() -> Outcome {
    let mut o = Outcome::new();
    let (lam, conv) = lambda(&ma(vec![1.0], gaussian(), SurvivalConvention::NonNegative), 8.0, 800);
    let err = (lam - 2.0 / PI).abs();
    o.check(conv && err <= C3_TOL, format!("MA(1) a₁=1 N(0,1) M=8 N=800: λ={lam:.10} |λ − 2/π|={err:.2e}"));
    let s = ma1_symmetric_series(2, 200);
    // P(ξ₋₁+ξ₀ ≥ 0, ξ₀+ξ₁ ≥ 0) = 1/3 for i.i.d. symmetric continuous ξ
    o.check(
        (s - 1.0 / 3.0).abs() <= C3_SERIES_TOL,
        format!("series c=2, 200 terms: {s:.12} vs 1/3"),
    );
    o
}

fn tan_residual(a: f64, b: f64, l: f64) -> f64 {
    let c = 1.0 - 2.0 * a / (a + b);
    (a / ((a + b) * l)).tan() - (1.0 - c / l) / (1.0 + c / l)
}

fn criterion_4() -> Outcome {
    let mut o = Outcome::new();
    let root = ma1_uniform_exponent(1.0, 3.0, 1e-13).unwrap();
    let res = tan_residual(1.0, 3.0, root).abs();
    o.check(res <= C4_RESIDUAL, format!("(a,b)=(1,3): root {root:.13}, residual {res:.1e}"));
    let (lam, conv) = lambda(&ma(vec![1.0], uniform(-1.0, 3.0), SurvivalConvention::NonNegative), 3.0, 800);
    let err = (lam - root).abs();
    o.check(conv && err <= C4_TOL, format!("operator N=800: λ={lam:.10} |Δ|={err:.2e}"));
    let closed = ma1_uniform_exponent(1.0, 1.0, 1e-13).unwrap();
    let by_root = ma1_uniform_root(1.0, 1.0, 1e-13).unwrap();
    let gap = (closed - 2.0 / PI).abs().max((by_root - 2.0 / PI).abs());
    o.check(gap <= C4_BRANCH_TOL, format!("a=b=1: closed {closed:.15}, root {by_root:.15}, max gap to 2/π {gap:.1e}"));
    o
}

fn criterion_5() -> Outcome {
    let mut o = Outcome::new();
    for a1 in [-0.9, -0.5, -0.1] {
        let model = ma(vec![a1], Innovation::Exponential, SurvivalConvention::NonNegative);
        let opts = OperatorOptions {
            n: Some(800),
            ..Default::default()
        };
        let (op, run) = operator::solve::<f64>(&model, &opts).unwrap();
        let lam = run.spectrum.lambda;
        let err = (lam - (1.0 + a1)).abs();
        let psi = op.sample(|x| if x[0] >= 0.0 { (a1 * x[0] / (1.0 + a1)).exp() } else { 1.0 });
        let res = op.residual(&psi, 1.0 + a1);
        o.check(
            run.spectrum.converged && err <= C5_TOL && res <= C5_RESIDUAL,
            format!("a₁={a1}: λ={lam:.10} |λ − (1+a₁)|={err:.1e}, eigenfunction residual {res:.1e}"),
        );
    }
    o
}

/// pₙ by enumerating all 2^{n+2} sign sequences.
fn rademacher_brute(n: usize, strict: bool) -> f64 {
    let len = n + 2;
    let hits = (0u64..1 << len)
        .filter(|bits| {
            (0..=n).all(|i| {
                let s = |k: usize| if bits >> k & 1 == 1 { 1 } else { -1 };
                let z = s(i) + s(i + 1);
                if strict {
                    z > 0
                } else {
                    z >= 0
                }
            })
        })
        .count();
    hits as f64 / (1u64 << len) as f64
}

fn criterion_6() -> Outcome {
    let mut o = Outcome::new();
    for conv in [SurvivalConvention::StrictlyPositive, SurvivalConvention::NonNegative] {
        let worst = (0..=40)
            .map(|n| {
                let c = rademacher_pn(n, conv);
                ((c - rademacher_transfer_pn(n, conv)) / c).abs()
            })
            .fold(0.0, f64::max);
        let brute_ok = (0..=14).all(|n| {
            (rademacher_pn(n, conv) - rademacher_brute(n, conv == SurvivalConvention::StrictlyPositive)).abs() < 1e-15
        });
        o.check(
            worst <= C6_REL && brute_ok,
            format!("{conv:?}: closed vs transfer, n≤40, max rel {worst:.1e}; enumeration n≤14 agrees: {brute_ok}"),
        );
        let est = estimate_crude(&ma(vec![1.0], Innovation::Rademacher, conv), &[1], 1_000_000, SEED).unwrap();
        let target = if conv == SurvivalConvention::StrictlyPositive { 0.125 } else { 0.625 };
        let z = (est.p_hat[0] - target).abs() / est.std_err[0];
        o.check(z <= C6_SE, format!("{conv:?}: crude p̂₁ = {:.5} vs {target}, {z:.2} SE", est.p_hat[0]));
    }
    o
}

fn criterion_7() -> Outcome {
    let mut o = Outcome::new();
    let model = ma(vec![-1.0], gaussian(), SurvivalConvention::NonNegative);
    let horizons: Vec<usize> = (0..=4).collect();
    let est = estimate_crude(&model, &horizons, 10_000_000, SEED).unwrap();
    let mut factorial = 2.0;
    for (i, &n) in horizons.iter().enumerate() {
        let exact = 1.0 / factorial;
        factorial *= (n + 3) as f64;
        let z = (est.p_hat[i] - exact).abs() / est.std_err[i];
        o.check(z <= C7_SE, format!("n={n}: p̂={:.6e} vs 1/{}! = {exact:.6e}, {z:.2} SE", est.p_hat[i], n + 2));
    }
    let (coarse, _) = lambda(&model, 6.0, 400);
    let (fine, _) = lambda(&model, 8.0, 800);
    o.check(fine < coarse, format!("operator λ(6,400)={coarse:.6} > λ(8,800)={fine:.6}"));
    o
}

fn criterion_8() -> Outcome {
    let mut o = Outcome::new();
    let spec = ExperimentSpec::from_model(&ar_iid(vec![0.0], gaussian()));
    let grid: Vec<Vec<f64>> = (0..=5).map(|k| vec![k as f64 / 10.0]).collect();
    let report = monotonicity_sweep("c8", &spec, &grid, &OperatorOptions::default(), C8_MIN_INCREMENT, None).unwrap();
    let values: Vec<String> = report.points.iter().map(|p| format!("{:.5}", p.lambda)).collect();
    let min_step = report.steps.iter().copied().fold(f64::INFINITY, f64::min);
    o.check(
        report.pass && min_step > C8_MIN_INCREMENT,
        format!("λ over a₁=0..0.5: [{}], smallest increment {min_step:.2e}", values.join(", ")),
    );
    let first = report.points[0].lambda;
    o.check((first - 0.5).abs() <= C8_ANCHOR_TOL, format!("λ(0) = {first:.8}"));
    o
}

fn criterion_9() -> Outcome {
    let mut o = Outcome::new();
    // Uniform(−1, 1) shifted by 1/2
    let model = ar_iid(vec![1.2], uniform(-0.5, 1.5));
    let regime = classify_regime(&model);
    o.check(
        regime.characteristic_root == Some(1.2),
        format!("regime {:?}, characteristic root {:?}", regime.regime, regime.characteristic_root),
    );
    let est = estimate_splitting(&model, &[50, 200], 100_000, SEED).unwrap();
    let l50 = est.p_hat[0].powf(1.0 / 50.0);
    let l200 = est.p_hat[1].powf(1.0 / 200.0);
    o.check(
        l200 > l50 && l200 > C9_FLOOR,
        format!("splitting p̂ₙ^(1/n): n=50 → {l50:.6}, n=200 → {l200:.6}"),
    );
    let tail = estimate_splitting(&model, &(150..=200).collect::<Vec<_>>(), 100_000, SEED).unwrap();
    let fit = fit_exponent(&tail, 0..tail.horizons.len()).unwrap();
    o.check(fit.lambda > C9_FLOOR, format!("window slope over n=150..200: λ̂ = {:.6}", fit.lambda));
    o
}

fn criterion_10() -> Outcome {
    let mut o = Outcome::new();
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/acceptance.json");
    let config = SuiteConfig::from_path(&path).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_suite(&config, dir.path()).unwrap();
    for (case, report) in config.cases.iter().zip(&outcome.reports) {
        let failed: Vec<&str> = report.checks().iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        o.check(report.pass(), format!("{} {}", case.name(), failed.join(", ")));
    }
    let wanted = ["nonnegativity", "conjugation", "truncation_monotone", "q_dependence", "seed_determinism"];
    let present: Vec<String> = config
        .cases
        .iter()
        .filter_map(|c| match c {
            persistx::harness::SuiteCase::Property(p) => Some(serde_json::to_string(&p.property).unwrap()),
            _ => None,
        })
        .collect();
    let missing: Vec<&&str> = wanted.iter().filter(|w| !present.iter().any(|p| p.contains(**w))).collect();
    o.check(missing.is_empty(), format!("property suites present, missing: {missing:?}"));
    o
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("AR(1) uniform operator", criterion_1),
        ("AR(1) exponential Monte Carlo", criterion_2),
        ("MA(1) symmetric", criterion_3),
        ("MA(1) uniform tan equation", criterion_4),
        ("MA(1) exponential", criterion_5),
        ("Rademacher", criterion_6),
        ("degenerate MA", criterion_7),
        ("strict monotonicity", criterion_8),
        ("supercritical AR", criterion_9),
        ("property suites", criterion_10),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut all = true;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = format!("criterion_{}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| id.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let outcome = run();
        all &= outcome.pass;
        println!(
            "[{}] {:>2}. {name} ({:.1} s)",
            if outcome.pass { "PASS" } else { "FAIL" },
            i + 1,
            t.elapsed().as_secs_f64()
        );
        for line in &outcome.lines {
            println!("        {line}");
        }
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
