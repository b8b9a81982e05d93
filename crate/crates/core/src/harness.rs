//! Cross-validation of the oracle, operator and Monte Carlo routes, property
//! sweeps and suite runs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentSpec, HorizonSpec};
use crate::model::{Innovation, Model};
use crate::operator::{self, convergence_sweep, OperatorError, OperatorOptions, OperatorRun};
use crate::oracle::{self, classify_regime, OracleCase, OracleError, Regime, RegimeReport};
use crate::rng::Stream;
use crate::simulate::{
    default_window, estimate_crude, MIN_FIT_COUNT, estimate_splitting, fit_exponent, ExponentFit, Method, PersistenceEstimate,
    SimulationError,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// Per-case acceptance tolerances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// |λ_oracle − λ_operator|.
    pub oracle_operator: f64,
    /// Floor for |λ_oracle − λ̂_mc|.
    pub oracle_mc: f64,
    /// Floor for |λ_operator − λ̂_mc| when no oracle exists.
    pub operator_mc: f64,
    /// Monte Carlo differences may also be this many half-widths.
    pub half_widths: f64,
    /// Largest allowed |p̂ₙ − pₙ|/SE against exact probabilities.
    pub pn_std_errs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            oracle_operator: 1e-3,
            oracle_mc: 5e-3,
            operator_mc: 1e-2,
            half_widths: 3.0,
            pn_std_errs: 4.0,
        }
    }
}

/// Monte Carlo route settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSettings {
    #[serde(default)]
    pub method: Method,
    /// Replicates (crude) or particles (splitting).
    pub samples: usize,
    pub horizons: HorizonSpec,
    /// Falls back to the suite seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Fit window as inclusive horizon values; last half of the grid when
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[usize; 2]>,
}

/// Runs the estimator named by `settings`.
pub fn run_mc(model: &Model, settings: &McSettings, seed: u64) -> Result<PersistenceEstimate, SimulationError> {
    let horizons = settings.horizons.to_vec();
    let seed = settings.seed.unwrap_or(seed);
    match settings.method {
        Method::Crude => estimate_crude(model, &horizons, settings.samples, seed),
        Method::Splitting => estimate_splitting(model, &horizons, settings.samples, seed),
    }
}

/// Exponent fit over horizons n ∈ [lo, hi].
pub fn fit_horizons(est: &PersistenceEstimate, [lo, hi]: [usize; 2]) -> Result<ExponentFit, SimulationError> {
    let start = est.horizons.partition_point(|&n| n < lo);
    let end = est.horizons.partition_point(|&n| n <= hi);
    fit_exponent(est, start..end)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    /// Passes when value ≤ tolerance.
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }

    /// Passes when value > threshold.
    pub fn above(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance: threshold,
            pass: value > threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PnRow {
    pub n: usize,
    pub p_hat: f64,
    pub std_err: f64,
    pub count: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_exact: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub method: Method,
    pub samples: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<ExponentFit>,
    pub table: Vec<PnRow>,
}

impl McSummary {
    fn new(est: &PersistenceEstimate, fit: Option<ExponentFit>, exact: impl Fn(usize) -> Option<f64>) -> Self {
        Self {
            method: est.method,
            samples: est.samples,
            seed: est.seed,
            lambda: fit.as_ref().map(|f| f.lambda),
            half_width: fit.as_ref().map(|f| f.half_width),
            fit,
            table: est
                .horizons
                .iter()
                .enumerate()
                .map(|(i, &n)| PnRow {
                    n,
                    p_hat: est.p_hat[i],
                    std_err: est.std_err[i],
                    count: est.counts[i],
                    p_exact: exact(n),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSummary {
    #[serde(flatten)]
    pub case: OracleCase,
    pub exponent: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diffs {
    pub oracle_operator: Option<f64>,
    pub oracle_mc: Option<f64>,
    pub operator_mc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct WallTime {
    pub oracle_s: f64,
    pub operator_s: f64,
    pub mc_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub case: String,
    pub spec: ExperimentSpec,
    pub regime: RegimeReport,
    pub tags: Vec<String>,
    pub oracle: Option<OracleSummary>,
    pub operator: Option<OperatorRun<f64>>,
    /// Degenerate MA only: the operator at M·4/3 and 2N.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub operator_refined: Option<OperatorRun<f64>>,
    pub mc: Option<McSummary>,
    pub diffs: Diffs,
    pub tolerances: Tolerances,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub pass: bool,
    pub wall_time: WallTime,
}

fn default_operator() -> Option<OperatorOptions> {
    Some(OperatorOptions::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareCase {
    pub name: String,
    pub spec: ExperimentSpec,
    /// `null` skips the operator route.
    #[serde(default = "default_operator")]
    pub operator: Option<OperatorOptions>,
    #[serde(default)]
    pub mc: Option<McSettings>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

/// |p̂ₙ − pₙ| in standard errors. Crude estimates use the binomial standard
/// error at the exact pₙ, which stays defined when no replicate survives.
fn pn_z_score(row: &PnRow, p: f64, method: Method, samples: usize) -> f64 {
    let se = match method {
        Method::Crude => (p * (1.0 - p) / samples as f64).sqrt(),
        Method::Splitting => row.std_err,
    };
    let gap = (row.p_hat - p).abs();
    if se > 0.0 {
        gap / se
    } else if gap == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Runs every applicable route for one model and checks them against each
/// other.
pub fn compare(case: &CompareCase, seed: u64) -> Result<ComparisonReport, HarnessError> {
    let model = case.spec.to_model()?;
    let tol = &case.tolerances;
    let regime = classify_regime(&model);
    let mut tags = Vec::new();
    let mut notes = Vec::new();
    let mut checks = Vec::new();
    let mut wall = WallTime::default();
    let degenerate = regime.regime == Regime::Degenerate;
    if degenerate || !regime.supported {
        tags.push(regime.label.clone());
    }

    let t = Instant::now();
    let oracle_case = OracleCase::lookup(&model);
    let oracle = match &oracle_case {
        Some(c) => Some(OracleSummary {
            case: c.clone(),
            exponent: c.exponent()?,
        }),
        None => {
            notes.push("no closed form for this model".into());
            None
        }
    };
    wall.oracle_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let mut operator_run = None;
    let mut operator_refined = None;
    if let Some(opts) = &case.operator {
        match operator::solve::<f64>(&model, opts) {
            Ok((_, run)) => {
                if degenerate {
                    let refined = OperatorOptions {
                        m: Some(run.grid.m * 4.0 / 3.0),
                        n: Some(2 * run.grid.n),
                        ..opts.clone()
                    };
                    let (_, fine) = operator::solve::<f64>(&model, &refined)?;
                    checks.push(Check::above(
                        "operator_decreases_under_refinement",
                        run.spectrum.lambda - fine.spectrum.lambda,
                        0.0,
                    ));
                    operator_refined = Some(fine);
                } else {
                    checks.push(Check {
                        name: "operator_converged".into(),
                        value: run.spectrum.residual,
                        tolerance: opts.tol,
                        pass: run.spectrum.converged,
                    });
                }
                operator_run = Some(run);
            }
            Err(OperatorError::Model(e)) => notes.push(format!("operator route not applicable: {e}")),
            Err(e) => return Err(e.into()),
        }
    }
    wall.operator_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let mut mc = None;
    if let Some(settings) = &case.mc {
        let est = run_mc(&model, settings, seed)?;
        let fit = match settings.window {
            Some(w) => fit_horizons(&est, w).ok(),
            None => est.exponent.clone(),
        };
        let exact = |n| oracle_case.as_ref().and_then(|c| c.pn(n));
        let summary = McSummary::new(&est, fit, exact);
        let worst = summary
            .table
            .iter()
            .filter_map(|r| r.p_exact.map(|p| pn_z_score(r, p, est.method, est.samples)))
            .fold(None, |m: Option<f64>, z| Some(m.map_or(z, |m| m.max(z))));
        if let Some(z) = worst {
            checks.push(Check::at_most("mc_pn_std_errs_from_exact", z, tol.pn_std_errs));
        }
        if degenerate {
            let len = est.counts.iter().take_while(|&&c| c >= MIN_FIT_COUNT).count();
            let early = fit_exponent(&est, 0..len / 2 + 1);
            let late = fit_exponent(&est, default_window(len));
            if let (Ok(e), Ok(l)) = (early, late) {
                checks.push(Check::above("mc_window_slope_decreasing", e.lambda - l.lambda, 0.0));
            }
        }
        mc = Some(summary);
    }
    wall.mc_s = t.elapsed().as_secs_f64();

    let mut diffs = Diffs::default();
    let lam_oracle = oracle.as_ref().map(|o| o.exponent);
    let lam_op = operator_run.as_ref().map(|r| r.spectrum.lambda);
    let mc_fit = mc.as_ref().and_then(|m| m.fit.clone());
    if let (Some(o), Some(p)) = (lam_oracle, lam_op) {
        diffs.oracle_operator = Some((o - p).abs());
        if !degenerate {
            checks.push(Check::at_most("oracle_vs_operator", (o - p).abs(), tol.oracle_operator));
        }
    }
    if let Some(fit) = &mc_fit {
        let band = |floor: f64| floor.max(tol.half_widths * fit.half_width);
        if let Some(o) = lam_oracle {
            diffs.oracle_mc = Some((o - fit.lambda).abs());
            if !degenerate {
                checks.push(Check::at_most("oracle_vs_mc", (o - fit.lambda).abs(), band(tol.oracle_mc)));
            }
        }
        if let Some(p) = lam_op {
            diffs.operator_mc = Some((p - fit.lambda).abs());
            if lam_oracle.is_none() {
                checks.push(Check::at_most("operator_vs_mc", (p - fit.lambda).abs(), band(tol.operator_mc)));
            }
        }
    }

    let pass = checks.iter().all(|c| c.pass);
    Ok(ComparisonReport {
        case: case.name.clone(),
        spec: case.spec.clone(),
        regime,
        tags,
        oracle,
        operator: operator_run,
        operator_refined,
        mc,
        diffs,
        tolerances: tol.clone(),
        checks,
        notes,
        pass,
        wall_time: wall,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Monotonicity,
    Continuity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub coeffs: Vec<f64>,
    pub lambda: f64,
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub case: String,
    pub kind: SweepKind,
    pub points: Vec<SweepPoint>,
    /// Consecutive increments (monotonicity) or gaps to the limit
    /// (continuity).
    pub steps: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limit: Option<SweepPoint>,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub wall_time_s: f64,
}

/// Expected value of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Anchor {
    pub value: f64,
    pub tol: f64,
}

fn operator_point(spec: &ExperimentSpec, coeffs: &[f64], opts: &OperatorOptions) -> Result<SweepPoint, HarnessError> {
    let model = spec.with_coeffs(coeffs.to_vec()).to_model()?;
    let (_, run) = operator::solve::<f64>(&model, opts)?;
    Ok(SweepPoint {
        coeffs: coeffs.to_vec(),
        lambda: run.spectrum.lambda,
        residual: run.spectrum.residual,
        converged: run.spectrum.converged,
    })
}

fn sweep_points(spec: &ExperimentSpec, coeffs: &[Vec<f64>], opts: &OperatorOptions) -> Result<Vec<SweepPoint>, HarnessError> {
    coeffs.par_iter().map(|c| operator_point(spec, c, opts)).collect()
}

fn converged_check(points: &[SweepPoint]) -> Check {
    let bad = points.iter().filter(|p| !p.converged).count();
    Check::at_most("all_points_converged", bad as f64, 0.0)
}

/// λ along a componentwise increasing coefficient grid; every increment
/// must exceed `min_increment`.
pub fn monotonicity_sweep(
    name: &str,
    base: &ExperimentSpec,
    grid: &[Vec<f64>],
    opts: &OperatorOptions,
    min_increment: f64,
    anchor: Option<&Anchor>,
) -> Result<SweepReport, HarnessError> {
    let t = Instant::now();
    if base.process != operator::ProcessKind::Ar {
        return Err(HarnessError::Precondition("monotonicity sweeps take AR models".into()));
    }
    if matches!(base.innovation, Innovation::Rademacher) {
        return Err(HarnessError::Precondition("innovation must have a log-concave density".into()));
    }
    for c in grid {
        if c.iter().any(|&a| a < 0.0) || !(c.iter().sum::<f64>() < 1.0) {
            return Err(HarnessError::Precondition(format!("need a >= 0 and sum(a) < 1, got {c:?}")));
        }
    }
    for w in grid.windows(2) {
        if w[0].len() != w[1].len() || w[0].iter().zip(&w[1]).any(|(a, b)| a > b) || w[0] == w[1] {
            return Err(HarnessError::Precondition(format!(
                "grid must increase componentwise: {:?} then {:?}",
                w[0], w[1]
            )));
        }
    }
    let points = sweep_points(base, grid, opts)?;
    let steps: Vec<f64> = points.windows(2).map(|w| w[1].lambda - w[0].lambda).collect();
    let mut checks = vec![converged_check(&points)];
    if let Some(min) = steps.iter().copied().reduce(f64::min) {
        checks.push(Check::above("smallest_increment", min, min_increment));
    }
    if let (Some(a), Some(first)) = (anchor, points.first()) {
        checks.push(Check::at_most("first_point_anchor", (first.lambda - a.value).abs(), a.tol));
    }
    Ok(SweepReport {
        case: name.into(),
        kind: SweepKind::Monotonicity,
        pass: checks.iter().all(|c| c.pass),
        points,
        steps,
        limit: None,
        checks,
        wall_time_s: t.elapsed().as_secs_f64(),
    })
}

/// λ along a path aₖ → a; the gaps |λ(aₖ) − λ(a)| must not grow and the
/// last one must be below `final_gap`.
pub fn continuity_sweep(
    name: &str,
    base: &ExperimentSpec,
    path: &[Vec<f64>],
    limit: &[f64],
    opts: &OperatorOptions,
    final_gap: f64,
    anchor: Option<&Anchor>,
) -> Result<SweepReport, HarnessError> {
    let t = Instant::now();
    if path.is_empty() {
        return Err(HarnessError::Precondition("continuity path is empty".into()));
    }
    let points = sweep_points(base, path, opts)?;
    let lim = operator_point(base, limit, opts)?;
    let steps: Vec<f64> = points.iter().map(|p| (p.lambda - lim.lambda).abs()).collect();
    let growth = steps.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let mut checks = vec![converged_check(&points)];
    if steps.len() > 1 {
        checks.push(Check::at_most("largest_gap_growth", growth, 1e-9));
    }
    checks.push(Check::at_most("final_gap", *steps.last().unwrap(), final_gap));
    if let Some(a) = anchor {
        checks.push(Check::at_most("limit_anchor", (lim.lambda - a.value).abs(), a.tol));
    }
    Ok(SweepReport {
        case: name.into(),
        kind: SweepKind::Continuity,
        pass: checks.iter().all(|c| c.pass),
        points,
        steps,
        limit: Some(lim),
        checks,
        wall_time_s: t.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonotonicityCase {
    pub name: String,
    pub spec: ExperimentSpec,
    pub grid: Vec<Vec<f64>>,
    #[serde(default)]
    pub operator: OperatorOptions,
    #[serde(default = "default_min_increment")]
    pub min_increment: f64,
    #[serde(default)]
    pub anchor: Option<Anchor>,
}

fn default_min_increment() -> f64 {
    1e-5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuityCase {
    pub name: String,
    pub spec: ExperimentSpec,
    pub path: Vec<Vec<f64>>,
    pub limit: Vec<f64>,
    #[serde(default)]
    pub operator: OperatorOptions,
    #[serde(default = "default_final_gap")]
    pub final_gap: f64,
    #[serde(default)]
    pub anchor: Option<Anchor>,
}

fn default_final_gap() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyKind {
    /// Kv ≥ 0 for v ≥ 0, ψ ≥ 0 and λ ≤ ‖K1‖∞.
    Nonnegativity,
    /// λ does not depend on the AR tilt.
    Conjugation,
    /// λ(M) nondecreasing in M.
    TruncationMonotone,
    /// p̂ₙ ≤ P(Z₀ ≥ 0)^{⌊n/(q+1)⌋} + 4·SE for MA runs.
    QDependence,
    /// Identical output under several worker counts.
    SeedDeterminism,
    /// Conditional-mean inequality for log-concave densities.
    LogConcave,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertyCase {
    pub name: String,
    pub property: PropertyKind,
    #[serde(default)]
    pub specs: Vec<ExperimentSpec>,
    #[serde(default)]
    pub operator: OperatorOptions,
    #[serde(default)]
    pub mc: Option<McSettings>,
    /// Tilts compared by `conjugation`.
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    /// Truncation bounds for `truncation_monotone`.
    #[serde(default)]
    pub ms: Vec<f64>,
    /// Worker counts for `seed_determinism`.
    #[serde(default = "default_threads")]
    pub threads: Vec<usize>,
    /// Innovations for `log_concave`.
    #[serde(default)]
    pub innovations: Vec<Innovation>,
    /// Property tolerance; each property has its own default.
    #[serde(default)]
    pub tol: Option<f64>,
    /// Random probe vectors for `nonnegativity`.
    #[serde(default = "default_probes")]
    pub probes: usize,
}

fn default_deltas() -> Vec<f64> {
    vec![0.0, 0.1, 0.5]
}

fn default_threads() -> Vec<usize> {
    vec![1, 2, 8]
}

fn default_probes() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyReport {
    pub case: String,
    pub property: PropertyKind,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub wall_time_s: f64,
}

fn spec_label(spec: &ExperimentSpec) -> String {
    format!(
        "{}{:?}/{}",
        match spec.process {
            operator::ProcessKind::Ar => "ar",
            operator::ProcessKind::Ma => "ma",
        },
        spec.coeffs,
        spec.innovation.name()
    )
}

fn need_mc(case: &PropertyCase) -> Result<&McSettings, HarnessError> {
    case.mc
        .as_ref()
        .ok_or_else(|| HarnessError::Precondition(format!("property {:?} needs mc settings", case.property)))
}

fn nonnegativity(case: &PropertyCase, seed: u64) -> Result<Vec<Check>, HarnessError> {
    let tol = case.tol.unwrap_or(1e-14);
    let mut checks = Vec::new();
    for spec in &case.specs {
        let label = spec_label(spec);
        let model = spec.to_model()?;
        let (op, run) = operator::solve::<f64>(&model, &case.operator)?;
        let mut stream = Stream::new(seed, 0);
        let mut worst = f64::INFINITY;
        let mut out = vec![0.0; op.len()];
        for probe in 0..=case.probes {
            let v: Vec<f64> = if probe == 0 {
                vec![1.0; op.len()]
            } else {
                // sparse-ish nonnegative vectors with a few large entries
                (0..op.len())
                    .map(|_| {
                        let u = stream.next_open01();
                        if u < 0.1 {
                            1.0 / u
                        } else {
                            u * u
                        }
                    })
                    .collect()
            };
            op.apply(&v, &mut out);
            worst = out.iter().copied().fold(worst, f64::min);
        }
        checks.push(Check::at_most(format!("{label}: -min(Kv)"), -worst, tol));
        let psi_min = run.spectrum.eigenvector.iter().copied().fold(f64::INFINITY, f64::min);
        checks.push(Check::at_most(format!("{label}: -min(psi)"), -psi_min, tol));
        let bound = op.row_sums().into_iter().fold(0.0, f64::max);
        checks.push(Check::at_most(
            format!("{label}: lambda - |K1|"),
            run.spectrum.lambda - bound,
            1e-12 * bound,
        ));
        checks.push(Check {
            name: format!("{label}: residual"),
            value: run.spectrum.residual,
            tolerance: case.operator.tol,
            pass: run.spectrum.converged && run.spectrum.residual <= case.operator.tol,
        });
    }
    Ok(checks)
}

fn conjugation(case: &PropertyCase) -> Result<Vec<Check>, HarnessError> {
    let tol = case.tol.unwrap_or(1e-8);
    let mut checks = Vec::new();
    for spec in &case.specs {
        if spec.process != operator::ProcessKind::Ar {
            return Err(HarnessError::Precondition("conjugation applies to AR models".into()));
        }
        let model = spec.to_model()?;
        let lambdas = case
            .deltas
            .par_iter()
            .map(|&d| {
                let opts = OperatorOptions {
                    tilt: Some(d),
                    ..case.operator.clone()
                };
                operator::solve::<f64>(&model, &opts).map(|(_, r)| r.spectrum.lambda)
            })
            .collect::<Result<Vec<f64>, _>>()?;
        let hi = lambdas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = lambdas.iter().copied().fold(f64::INFINITY, f64::min);
        checks.push(Check::at_most(format!("{}: lambda spread over tilts", spec_label(spec)), hi - lo, tol));
    }
    Ok(checks)
}

fn truncation_monotone(case: &PropertyCase) -> Result<Vec<Check>, HarnessError> {
    let tol = case.tol.unwrap_or(1e-6);
    let mut checks = Vec::new();
    for spec in &case.specs {
        let model = spec.to_model()?;
        let n = case.operator.nodes(&model);
        let table = convergence_sweep(&model, &case.ms, &[n], None, &case.operator)?;
        let mut sorted = table.entries.clone();
        sorted.sort_by(|a, b| a.m.total_cmp(&b.m));
        let drop = sorted
            .windows(2)
            .map(|w| w[0].lambda - w[1].lambda)
            .fold(f64::NEG_INFINITY, f64::max)
            .max(0.0);
        checks.push(Check::at_most(format!("{}: largest decrease in M", spec_label(spec)), drop, tol));
    }
    Ok(checks)
}

fn q_dependence(case: &PropertyCase, seed: u64) -> Result<Vec<Check>, HarnessError> {
    let settings = need_mc(case)?;
    let mut checks = Vec::new();
    for spec in &case.specs {
        let Model::Ma(ma) = spec.to_model()? else {
            return Err(HarnessError::Precondition("q-dependence applies to MA models".into()));
        };
        let q = ma.order();
        let marginal = oracle::ma_marginal_survival(&ma);
        let est = run_mc(&Model::Ma(ma), settings, seed)?;
        let excess = est
            .horizons
            .iter()
            .enumerate()
            .map(|(i, &n)| est.p_hat[i] - marginal.powi((n / (q + 1)) as i32) - 4.0 * est.std_err[i])
            .fold(f64::NEG_INFINITY, f64::max);
        checks.push(Check::at_most(format!("{}: p_hat above bound + 4SE", spec_label(spec)), excess, 0.0));
    }
    Ok(checks)
}

fn in_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::ThreadPool(e.to_string()))?;
    Ok(pool.install(f))
}

fn differing<X: PartialEq>(v: &[X]) -> f64 {
    v.iter().filter(|x| *x != &v[0]).count() as f64
}

fn seed_determinism(case: &PropertyCase, seed: u64) -> Result<Vec<Check>, HarnessError> {
    let settings = need_mc(case)?;
    let mut checks = Vec::new();
    for spec in &case.specs {
        let model = spec.to_model()?;
        let mut mc_outputs = Vec::new();
        let mut op_outputs = Vec::new();
        for &t in &case.threads {
            let est = in_pool(t, || run_mc(&model, settings, seed))??;
            mc_outputs.push(serde_json::to_string(&est)?);
            if model.innovation().has_density() {
                let run = in_pool(t, || operator::solve::<f64>(&model, &case.operator).map(|(_, r)| r))??;
                op_outputs.push((run.spectrum.lambda.to_bits(), run.spectrum.iterations));
            }
        }
        let label = spec_label(spec);
        checks.push(Check::at_most(format!("{label}: mc runs differing"), differing(&mc_outputs), 0.0));
        if !op_outputs.is_empty() {
            checks.push(Check::at_most(format!("{label}: operator runs differing"), differing(&op_outputs), 0.0));
        }
    }
    Ok(checks)
}

fn log_concave(case: &PropertyCase) -> Vec<Check> {
    let tol = case.tol.unwrap_or(1e-9);
    let thresholds = [0.0, 0.25, 0.5, 1.0, 2.0];
    let deltas = if case.deltas.iter().any(|&d| d > 0.0) {
        case.deltas.iter().copied().filter(|&d| d > 0.0).collect()
    } else {
        vec![0.1, 0.5, 1.0]
    };
    case.innovations
        .iter()
        .map(|innovation| {
            let worst = thresholds
                .iter()
                .flat_map(|&t| deltas.iter().map(move |&d| oracle::conditional_mean_gap(innovation, t, d)))
                .fold(f64::INFINITY, f64::min);
            Check::at_most(format!("{}: -min gap", innovation.name()), -worst, tol)
        })
        .collect()
}

pub fn run_property(case: &PropertyCase, seed: u64) -> Result<PropertyReport, HarnessError> {
    let t = Instant::now();
    let checks = match case.property {
        PropertyKind::Nonnegativity => nonnegativity(case, seed)?,
        PropertyKind::Conjugation => conjugation(case)?,
        PropertyKind::TruncationMonotone => truncation_monotone(case)?,
        PropertyKind::QDependence => q_dependence(case, seed)?,
        PropertyKind::SeedDeterminism => seed_determinism(case, seed)?,
        PropertyKind::LogConcave => log_concave(case),
    };
    Ok(PropertyReport {
        case: case.name.clone(),
        property: case.property,
        pass: !checks.is_empty() && checks.iter().all(|c| c.pass),
        checks,
        wall_time_s: t.elapsed().as_secs_f64(),
    })
}

/// One entry of a suite config, tagged by `"case"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum SuiteCase {
    Compare(CompareCase),
    Monotonicity(MonotonicityCase),
    Continuity(ContinuityCase),
    Property(PropertyCase),
}

impl SuiteCase {
    pub fn name(&self) -> &str {
        match self {
            SuiteCase::Compare(c) => &c.name,
            SuiteCase::Monotonicity(c) => &c.name,
            SuiteCase::Continuity(c) => &c.name,
            SuiteCase::Property(c) => &c.name,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            SuiteCase::Compare(_) => "compare",
            SuiteCase::Monotonicity(_) => "monotonicity",
            SuiteCase::Continuity(_) => "continuity",
            SuiteCase::Property(_) => "property",
        }
    }

    pub fn run(&self, seed: u64) -> Result<CaseReport, HarnessError> {
        Ok(match self {
            SuiteCase::Compare(c) => CaseReport::Compare(compare(c, seed)?),
            SuiteCase::Monotonicity(c) => CaseReport::Sweep(monotonicity_sweep(
                &c.name,
                &c.spec,
                &c.grid,
                &c.operator,
                c.min_increment,
                c.anchor.as_ref(),
            )?),
            SuiteCase::Continuity(c) => CaseReport::Sweep(continuity_sweep(
                &c.name,
                &c.spec,
                &c.path,
                &c.limit,
                &c.operator,
                c.final_gap,
                c.anchor.as_ref(),
            )?),
            SuiteCase::Property(c) => CaseReport::Property(run_property(c, seed)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub cases: Vec<SuiteCase>,
}

impl SuiteConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        let mut names: Vec<&str> = cfg.cases.iter().map(|c| c.name()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(ConfigError::Invalid(format!("duplicate case name {:?}", w[0])));
        }
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum CaseReport {
    Compare(ComparisonReport),
    Sweep(SweepReport),
    Property(PropertyReport),
    Failed { case: String, kind: String, error: String, pass: bool },
}

impl CaseReport {
    pub fn pass(&self) -> bool {
        match self {
            CaseReport::Compare(r) => r.pass,
            CaseReport::Sweep(r) => r.pass,
            CaseReport::Property(r) => r.pass,
            CaseReport::Failed { .. } => false,
        }
    }

    pub fn checks(&self) -> &[Check] {
        match self {
            CaseReport::Compare(r) => &r.checks,
            CaseReport::Sweep(r) => &r.checks,
            CaseReport::Property(r) => &r.checks,
            CaseReport::Failed { .. } => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub case: String,
    pub kind: String,
    pub lambda_oracle: Option<f64>,
    pub lambda_operator: Option<f64>,
    pub lambda_mc: Option<f64>,
    pub diff_oracle_operator: Option<f64>,
    pub diff_oracle_mc: Option<f64>,
    pub diff_operator_mc: Option<f64>,
    pub failed_checks: String,
    pub pass: bool,
}

fn summary_row(case: &SuiteCase, report: &CaseReport) -> SummaryRow {
    let mut row = SummaryRow {
        case: case.name().into(),
        kind: case.kind().into(),
        lambda_oracle: None,
        lambda_operator: None,
        lambda_mc: None,
        diff_oracle_operator: None,
        diff_oracle_mc: None,
        diff_operator_mc: None,
        failed_checks: report
            .checks()
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect::<Vec<_>>()
            .join("; "),
        pass: report.pass(),
    };
    match report {
        CaseReport::Compare(r) => {
            row.lambda_oracle = r.oracle.as_ref().map(|o| o.exponent);
            row.lambda_operator = r.operator.as_ref().map(|o| o.spectrum.lambda);
            row.lambda_mc = r.mc.as_ref().and_then(|m| m.lambda);
            row.diff_oracle_operator = r.diffs.oracle_operator;
            row.diff_oracle_mc = r.diffs.oracle_mc;
            row.diff_operator_mc = r.diffs.operator_mc;
        }
        CaseReport::Failed { error, .. } => row.failed_checks = error.clone(),
        _ => {}
    }
    row
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutcome {
    pub reports: Vec<CaseReport>,
    pub files: Vec<PathBuf>,
    pub summary: PathBuf,
}

impl SuiteOutcome {
    pub fn pass(&self) -> bool {
        self.reports.iter().all(|r| r.pass())
    }
}

fn slug(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect();
    s.trim_matches('-').to_string()
}

/// Runs every case (in parallel), writes one JSON report per case and
/// `summary.csv` into `out_dir`. A case whose computation errors counts as
/// failed.
pub fn run_suite(config: &SuiteConfig, out_dir: &Path) -> Result<SuiteOutcome, HarnessError> {
    fs::create_dir_all(out_dir)?;
    let reports: Vec<CaseReport> = config
        .cases
        .par_iter()
        .map(|case| {
            case.run(config.seed).unwrap_or_else(|e| CaseReport::Failed {
                case: case.name().into(),
                kind: case.kind().into(),
                error: e.to_string(),
                pass: false,
            })
        })
        .collect();
    let mut files = Vec::with_capacity(reports.len());
    for (i, (case, report)) in config.cases.iter().zip(&reports).enumerate() {
        let path = out_dir.join(format!("{:02}-{}.json", i + 1, slug(case.name())));
        let mut text = serde_json::to_string_pretty(report)?;
        text.push('\n');
        fs::write(&path, text)?;
        files.push(path);
    }
    let summary = out_dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&summary)?;
    if config.cases.is_empty() {
        w.write_record([
            "case",
            "kind",
            "lambda_oracle",
            "lambda_operator",
            "lambda_mc",
            "diff_oracle_operator",
            "diff_oracle_mc",
            "diff_operator_mc",
            "failed_checks",
            "pass",
        ])?;
    }
    for (case, report) in config.cases.iter().zip(&reports) {
        w.serialize(summary_row(case, report))?;
    }
    w.flush()?;
    Ok(SuiteOutcome {
        reports,
        files,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_case_tag_is_named() {
        let err = SuiteConfig::from_json(r#"{"cases":[{"case":"bogus","name":"x"}]}"#).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn malformed_config_reports_position() {
        let err = SuiteConfig::from_json("{\n \"cases\": [\n  {\"case\": \"compare\",, }\n ]\n}").unwrap_err();
        let ConfigError::Parse { line, column, .. } = err else { panic!("{err}") };
        assert_eq!((line, column), (3, 22));
    }

    #[test]
    fn slugs() {
        assert_eq!(slug("AR(1) uniform, a=1"), "ar-1--uniform--a-1");
    }
}
