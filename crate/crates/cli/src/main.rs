use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use persistx::config::{ExperimentSpec, HorizonSpec};
use persistx::harness::{
    compare, continuity_sweep, fit_horizons, monotonicity_sweep, run_mc, run_suite, Anchor, CompareCase, McSettings,
    SuiteConfig, Tolerances,
};
use persistx::model::{InitialDistribution, Innovation, SurvivalConvention};
use persistx::operator::{self, convergence_sweep, OperatorOptions, ProcessKind};
use persistx::oracle::{classify_regime, OracleCase};
use persistx::quadrature::Scheme;
use persistx::simulate::Method;
use serde::Serialize;
use serde_json::{json, Value};

/// Persistence exponents of AR and MA processes.
#[derive(Parser, Debug)]
#[command(name = "persistx", version)]
struct Cli {
    /// Worker threads [default: machine parallelism]
    #[arg(long, global = true, env = "PERSISTX_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte Carlo estimate of pₙ and the exponent
    Simulate(SimulateArgs),
    /// Spectral radius of the discretized persistence operator
    Operator(OperatorArgs),
    /// Closed-form exponent and exact pₙ
    Oracle(OracleArgs),
    /// Run all routes on one model, or a whole suite with --config
    Compare(CompareArgs),
    /// Monotonicity, continuity or grid-convergence sweeps of the operator route
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Process {
    Ar,
    Ma,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Convention {
    /// Zᵢ ≥ 0
    Ge,
    /// Zᵢ > 0
    Gt,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Experiment spec JSON file; replaces the model flags
    #[arg(long, conflicts_with_all = ["coeffs", "innovation", "init"])]
    spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Process::Ar)]
    process: Process,
    /// Coefficients a₁,…,aₖ, comma separated; write negatives as --coeffs=-1
    #[arg(long, value_name = "A1,A2,...", value_delimiter = ',', allow_negative_numbers = true, num_args = 1)]
    coeffs: Vec<f64>,
    /// Innovation law: uniform:LO,HI | gaussian:SD | exponential | rademacher
    #[arg(long, value_name = "KIND[:PARAMS]", default_value = "gaussian:1", value_parser = parse_innovation)]
    innovation: Innovation,
    /// AR initial law: iid | point:X1,…,Xp | stationary (Gaussian AR(1))
    #[arg(long)]
    init: Option<String>,
    #[arg(long, value_enum, default_value_t = Convention::Ge)]
    convention: Convention,
}

#[derive(Args, Debug)]
struct McArgs {
    #[arg(long, value_enum, default_value_t = MethodArg::Crude)]
    method: MethodArg,
    /// Largest horizon; horizons are 1..=n
    #[arg(long, default_value_t = 20)]
    n: usize,
    /// Explicit horizons, comma separated; overrides --n
    #[arg(long, value_delimiter = ',')]
    horizons: Option<Vec<usize>>,
    /// Replicates (crude) or particles (splitting)
    #[arg(long, alias = "particles", default_value_t = 100_000)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fit window LO,HI in horizon values [default: last half of the positive estimates]
    #[arg(long, value_delimiter = ',', num_args = 1)]
    window: Option<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Crude,
    Splitting,
}

#[derive(Args, Debug)]
struct GridArgs {
    /// Truncation bound M [default: innovation dependent]
    #[arg(long)]
    m: Option<f64>,
    /// Nodes per axis N [default: 400, 60, 24 for dimension 1, 2, 3+]
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long, value_enum, default_value_t = SchemeArg::GaussLegendre)]
    scheme: SchemeArg,
    /// AR tilt δ [default: half the innovation decay rate over p when some aⱼ > 0, else 0]
    #[arg(long, allow_negative_numbers = true)]
    tilt: Option<f64>,
    /// Use plain node weights on cut cells
    #[arg(long)]
    no_cut_correction: bool,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 20_000)]
    max_iter: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SchemeArg {
    GaussLegendre,
    Midpoint,
}

impl GridArgs {
    fn options(&self) -> OperatorOptions {
        OperatorOptions {
            m: self.m,
            n: self.nodes,
            scheme: match self.scheme {
                SchemeArg::GaussLegendre => Scheme::GaussLegendre,
                SchemeArg::Midpoint => Scheme::Midpoint,
            },
            tilt: self.tilt,
            cut_correction: !self.no_cut_correction,
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Args, Debug)]
struct Output {
    /// Write the JSON report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the tabular section as CSV
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    mc: McArgs,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Args, Debug)]
struct OperatorArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    precision: Precision,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CaseName {
    Ar1Uniform,
    Ar1Exponential,
    Ma1Uniform,
    Ma1Symmetric,
    Ma1Rademacher,
    Ma1Exponential,
    Iid,
    DegenerateMa,
    SupercriticalAr,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(long, value_enum)]
    case: CaseName,
    /// Uniform(−a, b) left end
    #[arg(long, allow_negative_numbers = true)]
    a: Option<f64>,
    /// Uniform(−a, b) right end
    #[arg(long, allow_negative_numbers = true)]
    b: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    a1: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, num_args = 1)]
    coeffs: Option<Vec<f64>>,
    #[arg(long, value_parser = parse_innovation)]
    innovation: Option<Innovation>,
    /// AR initial law for exact pₙ: iid | point:X
    #[arg(long)]
    init: Option<String>,
    #[arg(long, value_enum)]
    convention: Option<Convention>,
    /// Largest n in the exact pₙ table
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Suite config; runs every case and writes reports to --out
    #[arg(long, conflicts_with_all = ["spec", "coeffs"])]
    config: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    grid: GridArgs,
    /// Skip the operator route
    #[arg(long)]
    no_operator: bool,
    /// Skip the Monte Carlo route
    #[arg(long)]
    no_mc: bool,
    #[command(flatten)]
    mc: McArgs,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SweepKindArg {
    Monotonicity,
    Continuity,
    Convergence,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_enum)]
    kind: SweepKindArg,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    grid: GridArgs,
    /// Coefficient vectors separated by ';', components by ',' (e.g. "0;0.1;0.2")
    #[arg(long, value_parser = parse_vectors, allow_hyphen_values = true)]
    points: Option<Points>,
    /// Continuity limit a, comma separated
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, num_args = 1)]
    limit: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1e-5)]
    min_increment: f64,
    #[arg(long, default_value_t = 1e-3)]
    final_gap: f64,
    /// Truncation bounds for the convergence table
    #[arg(long, value_delimiter = ',', num_args = 1)]
    ms: Option<Vec<f64>>,
    /// Node counts for the convergence table
    #[arg(long, value_delimiter = ',', num_args = 1)]
    ns: Option<Vec<usize>>,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Compute(String),
    /// Ran to completion but some check failed.
    Checks,
}

impl<E: std::error::Error> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Compute(e.to_string())
    }
}

fn parse_innovation(s: &str) -> Result<Innovation, String> {
    let (kind, params) = s.split_once(':').unwrap_or((s, ""));
    let nums: Vec<f64> = if params.is_empty() {
        Vec::new()
    } else {
        params
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<Result<_, _>>()?
    };
    let arity = |k: usize| {
        if nums.len() == k {
            Ok(())
        } else {
            Err(format!("{kind} takes {k} parameter(s), got {}", nums.len()))
        }
    };
    let grammar = "expected uniform:LO,HI | gaussian:SD | exponential | rademacher";
    match kind {
        "uniform" => {
            arity(2)?;
            Innovation::uniform(nums[0], nums[1]).map_err(|e| e.to_string())
        }
        "gaussian" | "normal" => {
            if nums.is_empty() {
                return Ok(Innovation::Gaussian { sd: 1.0 });
            }
            arity(1)?;
            Innovation::gaussian(nums[0]).map_err(|e| e.to_string())
        }
        "exponential" => arity(0).map(|_| Innovation::Exponential),
        "rademacher" => arity(0).map(|_| Innovation::Rademacher),
        _ => Err(format!("unknown innovation {kind:?}; {grammar}")),
    }
}

#[derive(Clone, Debug)]
struct Points(Vec<Vec<f64>>);

fn parse_vectors(s: &str) -> Result<Points, String> {
    s.split(';')
        .map(|v| {
            v.split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}")))
                .collect()
        })
        .collect::<Result<_, _>>()
        .map(Points)
}

fn parse_init(s: &str, coeffs: &[f64], innovation: Innovation) -> Result<InitialDistribution, Failure> {
    let (kind, params) = s.split_once(':').unwrap_or((s, ""));
    match kind {
        "iid" => Ok(InitialDistribution::Iid { innovation }),
        "point" => {
            let x = params
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Failure::Usage(format!("--init {s}: {e}")))?;
            Ok(InitialDistribution::PointMass { x })
        }
        "stationary" => match coeffs {
            [a1] => Ok(InitialDistribution::StationaryAr1Gaussian { a1: *a1 }),
            _ => Err(Failure::Usage("--init stationary needs a single coefficient".into())),
        },
        _ => Err(Failure::Usage(format!(
            "--init {s}: expected iid | point:X1,...,Xp | stationary"
        ))),
    }
}

fn convention(c: Convention) -> SurvivalConvention {
    match c {
        Convention::Ge => SurvivalConvention::NonNegative,
        Convention::Gt => SurvivalConvention::StrictlyPositive,
    }
}

impl ModelArgs {
    fn spec(&self) -> Result<ExperimentSpec, Failure> {
        let spec = match &self.spec {
            Some(path) => ExperimentSpec::from_json(&fs::read_to_string(path)?)
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?,
            None => {
                if self.coeffs.is_empty() {
                    return Err(Failure::Usage("--coeffs is required (or --spec FILE)".into()));
                }
                let process = match self.process {
                    Process::Ar => ProcessKind::Ar,
                    Process::Ma => ProcessKind::Ma,
                };
                let initial = match (&self.init, process) {
                    (Some(_), ProcessKind::Ma) => return Err(Failure::Usage("--init applies to AR processes".into())),
                    (Some(s), ProcessKind::Ar) => Some(parse_init(s, &self.coeffs, self.innovation)?),
                    (None, _) => None,
                };
                ExperimentSpec {
                    process,
                    order: None,
                    coeffs: self.coeffs.clone(),
                    innovation: self.innovation,
                    initial,
                    convention: convention(self.convention),
                }
            }
        };
        spec.to_model().map_err(|e| Failure::Usage(e.to_string()))?;
        Ok(spec)
    }
}

impl McArgs {
    fn settings(&self) -> Result<McSettings, Failure> {
        let horizons = match &self.horizons {
            Some(h) => HorizonSpec::List(h.clone()),
            None => HorizonSpec::Range {
                from: 1,
                to: self.n,
                step: 1,
            },
        };
        let window = match self.window.as_deref() {
            None => None,
            Some(&[lo, hi]) => Some([lo, hi]),
            Some(_) => return Err(Failure::Usage("--window takes LO,HI".into())),
        };
        Ok(McSettings {
            method: match self.method {
                MethodArg::Crude => Method::Crude,
                MethodArg::Splitting => Method::Splitting,
            },
            samples: self.reps,
            horizons,
            seed: Some(self.seed),
            window,
        })
    }
}

fn write_json(value: &impl Serialize, out: Option<&Path>) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn write_csv<R: Serialize>(rows: impl IntoIterator<Item = R>, path: &Path) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct PnCsvRow {
    n: usize,
    p_hat: f64,
    std_err: f64,
    count: u64,
}

fn simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let spec = args.model.spec()?;
    let model = spec.to_model().map_err(|e| Failure::Usage(e.to_string()))?;
    let settings = args.mc.settings()?;
    let est = run_mc(&model, &settings, args.mc.seed)?;
    let fit = match settings.window {
        Some(w) => Some(fit_horizons(&est, w)?),
        None => est.exponent.clone(),
    };
    if let Some(path) = &args.output.csv {
        write_csv(
            est.horizons.iter().enumerate().map(|(i, &n)| PnCsvRow {
                n,
                p_hat: est.p_hat[i],
                std_err: est.std_err[i],
                count: est.counts[i],
            }),
            path,
        )?;
    }
    write_json(
        &json!({
            "spec": spec,
            "regime": classify_regime(&model),
            "lambda": fit.as_ref().map(|f| f.lambda),
            "half_width": fit.as_ref().map(|f| f.half_width),
            "fit": fit,
            "estimate": est,
        }),
        args.output.out.as_deref(),
    )
}

fn run_operator(args: &OperatorArgs) -> Result<(), Failure> {
    let spec = args.model.spec()?;
    let model = spec.to_model().map_err(|e| Failure::Usage(e.to_string()))?;
    let opts = args.grid.options();
    let (run, table) = match args.precision {
        Precision::F64 => {
            let (op, run) = operator::solve::<f64>(&model, &opts)?;
            let table = run.eigenfunction_table(&op);
            (serde_json::to_value(&run)?, table)
        }
        Precision::F32 => {
            let (op, run) = operator::solve::<f32>(&model, &opts)?;
            let table = run.eigenfunction_table(&op);
            (serde_json::to_value(&run)?, table)
        }
    };
    if let Some(path) = &args.output.csv {
        let rows = table.ok_or_else(|| Failure::Usage("--csv eigenfunction table needs a one-dimensional grid".into()))?;
        write_csv(rows.into_iter().map(|(x, psi)| [x, psi]), path)?;
    }
    let converged = run["converged"].as_bool().unwrap_or(false);
    write_json(
        &json!({ "spec": spec, "regime": classify_regime(&model), "operator": run }),
        args.output.out.as_deref(),
    )?;
    if converged {
        Ok(())
    } else {
        Err(Failure::Compute("power iteration did not converge".into()))
    }
}

fn oracle(args: &OracleArgs) -> Result<(), Failure> {
    let name = args
        .case
        .to_possible_value()
        .expect("no skipped variants")
        .get_name()
        .to_string();
    let mut obj = serde_json::Map::new();
    obj.insert("case".into(), json!(name));
    let mut put = |k: &str, v: Option<Value>| {
        if let Some(v) = v {
            obj.insert(k.into(), v);
        }
    };
    put("a", args.a.map(|x| json!(x)));
    put("b", args.b.map(|x| json!(x)));
    put("a1", args.a1.map(|x| json!(x)));
    put("coeffs", args.coeffs.as_ref().map(|x| json!(x)));
    put("innovation", args.innovation.map(|x| json!(x)));
    put("convention", args.convention.map(|c| json!(convention(c))));
    if let Some(s) = &args.init {
        let a1 = args.a1.unwrap_or(-1.0);
        put("initial", Some(json!(parse_init(s, &[a1], Innovation::Exponential)?)));
    }
    let case: OracleCase = serde_json::from_value(Value::Object(obj))
        .map_err(|e| Failure::Usage(format!("--case {name}: {e}")))?;
    let exponent = case.exponent()?;
    let table: Vec<Value> = (0..=args.n)
        .filter_map(|n| case.pn(n).map(|p| json!({ "n": n, "p": p })))
        .collect();
    if let Some(path) = &args.output.csv {
        write_csv(
            (0..=args.n).filter_map(|n| case.pn(n).map(|p| (n, p))),
            path,
        )?;
    }
    let mut parameters = serde_json::to_value(&case)?;
    parameters.as_object_mut().map(|o| o.remove("case"));
    write_json(
        &json!({
            "case": name,
            "parameters": parameters,
            "exponent": exponent,
            "pn": table,
        }),
        args.output.out.as_deref(),
    )
}

fn run_compare(args: &CompareArgs) -> Result<(), Failure> {
    if let Some(path) = &args.config {
        let config = SuiteConfig::from_path(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        let out = args
            .output
            .out
            .as_deref()
            .ok_or_else(|| Failure::Usage("--config needs --out DIR for the reports".into()))?;
        let outcome = run_suite(&config, out)?;
        for (case, report) in config.cases.iter().zip(&outcome.reports) {
            eprintln!("[{}] {}", if report.pass() { "PASS" } else { "FAIL" }, case.name());
        }
        println!("{}", outcome.summary.display());
        return if outcome.pass() { Ok(()) } else { Err(Failure::Checks) };
    }
    let case = CompareCase {
        name: "cli".into(),
        spec: args.model.spec()?,
        operator: (!args.no_operator).then(|| args.grid.options()),
        mc: if args.no_mc { None } else { Some(args.mc.settings()?) },
        tolerances: Tolerances::default(),
    };
    let report = compare(&case, args.mc.seed)?;
    if let (Some(path), Some(mc)) = (&args.output.csv, &report.mc) {
        write_csv(&mc.table, path)?;
    }
    write_json(&report, args.output.out.as_deref())?;
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn sweep(args: &SweepArgs) -> Result<(), Failure> {
    let spec = args.model.spec()?;
    let opts = args.grid.options();
    let need_points = || {
        args.points
            .clone()
            .map(|p| p.0)
            .ok_or_else(|| Failure::Usage("--points is required for this sweep".into()))
    };
    match args.kind {
        SweepKindArg::Convergence => {
            let model = spec.to_model().map_err(|e| Failure::Usage(e.to_string()))?;
            let ms = args.ms.clone().unwrap_or_else(|| vec![opts.truncation(&model)]);
            let ns = args.ns.clone().unwrap_or_else(|| vec![opts.nodes(&model)]);
            let table = convergence_sweep(&model, &ms, &ns, args.grid.tilt, &opts)?;
            if let Some(path) = &args.output.csv {
                write_csv(&table.entries, path)?;
            }
            write_json(&json!({ "spec": spec, "convergence": table }), args.output.out.as_deref())
        }
        SweepKindArg::Monotonicity | SweepKindArg::Continuity => {
            let points = need_points()?;
            let report = if matches!(args.kind, SweepKindArg::Monotonicity) {
                monotonicity_sweep("cli", &spec, &points, &opts, args.min_increment, None::<&Anchor>)
            } else {
                let limit = args
                    .limit
                    .clone()
                    .ok_or_else(|| Failure::Usage("--limit is required for continuity sweeps".into()))?;
                continuity_sweep("cli", &spec, &points, &limit, &opts, args.final_gap, None)
            }
            .map_err(|e| match e {
                persistx::HarnessError::Precondition(m) => Failure::Usage(m),
                e => Failure::Compute(e.to_string()),
            })?;
            if let Some(path) = &args.output.csv {
                write_csv(
                    report
                        .points
                        .iter()
                        .map(|p| (p.coeffs.iter().map(f64::to_string).collect::<Vec<_>>().join(" "), p.lambda, p.residual, p.converged)),
                    path,
                )?;
            }
            write_json(&report, args.output.out.as_deref())?;
            if report.pass {
                Ok(())
            } else {
                Err(Failure::Checks)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Operator(a) => run_operator(a),
        Command::Oracle(a) => oracle(a),
        Command::Compare(a) => run_compare(a),
        Command::Sweep(a) => sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Compute(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Checks) => {
            eprintln!("some checks failed");
            ExitCode::from(1)
        }
    }
}
