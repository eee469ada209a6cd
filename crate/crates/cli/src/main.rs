use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lineout::bench::{self, fmt17, BenchConfig, Method, NoiseModel, OutageKind};
use lineout::lars::{self, SelectionRule};
use lineout::mdc;
use lineout::netmodel::{ieee39, parse_case, NetworkModel};
use lineout::powerflow::{solve_power_flow, PowerFlowOptions};
use lineout::sigmap::{build_signature_map, dc_signature_map, PmuPlacement};
use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

mod io;

const DEFAULT_SEED: u64 = 42;
const TABLE_THRESHOLDS: [f64; 7] = [0.80, 0.84, 0.88, 0.93, 0.95, 0.98, 0.99];

/// Multiple line outage identification from partial PMU angle data.
#[derive(Parser)]
#[command(name = "lineout", version, propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the AC power flow of a case from a flat start.
    Solve(SolveArgs),
    /// Write the outage signature map for a PMU placement as CSV.
    Map(MapArgs),
    /// Simulate the angle change a set of line outages produces at the PMUs.
    Simulate(SimulateArgs),
    /// Minimal diagnosable clusters of a signature map.
    Mdc(MdcArgs),
    /// Identify outaged lines from a measured angle change.
    Identify(IdentifyArgs),
    /// Run the Monte Carlo accuracy benchmark.
    Bench(BenchArgs),
    /// Lasso accuracy across measurement noise levels.
    SweepNoise(SweepNoiseArgs),
    /// Diagnosability and Lasso+MDC accuracy across correlation thresholds.
    SweepRho(SweepRhoArgs),
}

#[derive(Args)]
struct CaseArg {
    /// MATPOWER case file; the bundled IEEE 39-bus case when omitted.
    #[arg(long, value_name = "FILE")]
    case: Option<PathBuf>,
}

#[derive(Args)]
struct PowerFlowArgs {
    /// Newton-Raphson mismatch tolerance, p.u.
    #[arg(long, default_value_t = 1e-8, value_parser = positive_f64)]
    tol: f64,
    /// Newton-Raphson iteration limit.
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    max_iter: u64,
}

impl PowerFlowArgs {
    fn options(&self) -> PowerFlowOptions {
        PowerFlowOptions {
            tolerance: self.tol,
            max_iterations: self.max_iter as usize,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    case: CaseArg,
    #[command(flatten)]
    pf: PowerFlowArgs,
    /// Print JSON instead of CSV.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct PlacementArgs {
    /// PMU bus numbers as written in the case file.
    #[arg(long, value_delimiter = ',', conflicts_with = "coverage", required_unless_present = "coverage")]
    pmus: Vec<u64>,
    /// Draw round(coverage * N) PMU buses at random instead.
    #[arg(long, value_parser = unit_fraction)]
    coverage: Option<f64>,
    /// Seed for the random placement.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Args)]
struct MapArgs {
    #[command(flatten)]
    case: CaseArg,
    #[command(flatten)]
    placement: PlacementArgs,
    #[command(flatten)]
    pf: PowerFlowArgs,
    /// Build the map from the DC susceptance matrix.
    #[arg(long)]
    dc: bool,
    /// Output file; standard output when omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    case: CaseArg,
    #[command(flatten)]
    placement: PlacementArgs,
    #[command(flatten)]
    pf: PowerFlowArgs,
    /// Tripped line ids.
    #[arg(long, value_delimiter = ',', required = true)]
    lines: Vec<usize>,
    /// Noise standard deviation as a fraction of each bus's clean angle change.
    #[arg(long, default_value_t = 0.0, value_parser = nonnegative_f64)]
    noise: f64,
    /// Output file; standard output when omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MdcArgs {
    /// Signature map CSV.
    #[arg(long, value_name = "FILE")]
    map: PathBuf,
    /// Correlation threshold.
    #[arg(long, default_value_t = 0.95, value_parser = unit_fraction)]
    rho: f64,
    /// Print diagnosability over the thresholds 0.80 to 0.99 as CSV instead.
    #[arg(long)]
    sweep: bool,
}

#[derive(Args)]
struct RuleArgs {
    /// Keep lines with |beta| >= gamma * max |beta|.
    #[arg(long, value_parser = unit_fraction, conflicts_with = "top_k")]
    gamma: Option<f64>,
    /// Keep the k largest coefficients instead.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    top_k: Option<u64>,
    /// Lasso path steps after the first join; min(K - 1, L) when omitted.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    max_steps: Option<u64>,
}

impl RuleArgs {
    fn rule(&self) -> SelectionRule {
        match (self.gamma, self.top_k) {
            (_, Some(k)) => SelectionRule::TopK { k: k as usize },
            (Some(gamma), None) => SelectionRule::Relative { gamma },
            (None, None) => SelectionRule::default(),
        }
    }

    fn max_steps(&self) -> Option<usize> {
        self.max_steps.map(|q| q as usize)
    }
}

#[derive(Args)]
struct IdentifyArgs {
    /// Signature map CSV.
    #[arg(long, value_name = "FILE")]
    map: PathBuf,
    /// Measured angle change CSV with columns bus,dtheta.
    #[arg(long, value_name = "FILE")]
    dtheta: PathBuf,
    #[command(flatten)]
    rule: RuleArgs,
    /// Also write every transition point of the lasso path to this file.
    #[arg(long, value_name = "FILE")]
    path_csv: Option<PathBuf>,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Single,
    Double,
}

impl From<KindArg> for OutageKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Single => OutageKind::Single,
            KindArg::Double => OutageKind::Double,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Lasso,
    Corr,
    Dc,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Lasso => Method::Lasso,
            MethodArg::Corr => Method::Corr,
            MethodArg::Dc => Method::Dc,
        }
    }
}

#[derive(Args)]
struct ProtocolArgs {
    #[command(flatten)]
    case: CaseArg,
    /// Number of runs, each with its own placement, load perturbations and noise.
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    runs: u64,
    /// Outage kinds to simulate.
    #[arg(long, value_delimiter = ',', default_values = ["single", "double"])]
    kind: Vec<KindArg>,
    /// Number of random line pairs for double-line outages.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    double_count: u64,
    /// Correlation threshold for MDC augmentation.
    #[arg(long, default_value_t = 0.95, value_parser = unit_fraction)]
    rho: f64,
    /// Fixed PMU count overriding round(coverage * N).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pmu_count: Option<u64>,
    /// Load scaling factors are drawn from [1 - spread, 1 + spread].
    #[arg(long, default_value_t = 0.05, value_parser = load_spread)]
    load_spread: f64,
    /// Master seed; every random draw derives from it.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[command(flatten)]
    rule: RuleArgs,
    #[command(flatten)]
    pf: PowerFlowArgs,
}

impl ProtocolArgs {
    fn config(&self, coverages: Vec<f64>, noise: f64) -> BenchConfig {
        BenchConfig {
            coverages,
            pmu_count: self.pmu_count.map(|k| k as usize),
            runs: self.runs as usize,
            kinds: self.kind.iter().map(|&k| k.into()).collect(),
            double_count: self.double_count as usize,
            rho_star: self.rho,
            rule: self.rule.rule(),
            max_steps: self.rule.max_steps(),
            noise: NoiseModel {
                sigma_fraction: noise,
                ..NoiseModel::default()
            },
            load_spread: self.load_spread,
            methods: Method::ALL.to_vec(),
            seed: self.seed,
            power_flow: self.pf.options(),
            per_scenario: false,
        }
    }
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    protocol: ProtocolArgs,
    /// PMU coverage fractions.
    #[arg(long, value_delimiter = ',', default_values = ["0.25", "0.5"], value_parser = unit_fraction)]
    coverage: Vec<f64>,
    /// Methods to score.
    #[arg(long, value_delimiter = ',', default_values = ["lasso", "corr", "dc"])]
    methods: Vec<MethodArg>,
    /// Noise standard deviation as a fraction of each bus's clean angle change.
    #[arg(long, default_value_t = 0.05, value_parser = nonnegative_f64)]
    noise: f64,
    /// JSON report file; standard output when omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Write the accuracy summary table as CSV to this file.
    #[arg(long, value_name = "FILE")]
    summary_csv: Option<PathBuf>,
    /// Write one CSV record per run, scenario and method to this file.
    #[arg(long, value_name = "FILE")]
    per_scenario: Option<PathBuf>,
}

#[derive(Args)]
struct SweepNoiseArgs {
    #[command(flatten)]
    protocol: ProtocolArgs,
    /// PMU coverage fraction.
    #[arg(long, default_value_t = 0.5, value_parser = unit_fraction)]
    coverage: f64,
    /// Noise fractions to evaluate.
    #[arg(long, value_delimiter = ',', default_values = ["0", "0.02", "0.04", "0.06", "0.08", "0.1"], value_parser = nonnegative_f64)]
    levels: Vec<f64>,
    /// Output CSV file; standard output when omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepRhoArgs {
    #[command(flatten)]
    protocol: ProtocolArgs,
    /// PMU coverage fraction.
    #[arg(long, default_value_t = 0.5, value_parser = unit_fraction)]
    coverage: f64,
    /// Correlation thresholds to evaluate.
    #[arg(long, value_delimiter = ',', default_values = ["0.8", "0.84", "0.88", "0.93", "0.95", "0.98", "0.99"], value_parser = unit_fraction)]
    thresholds: Vec<f64>,
    /// Noise standard deviation as a fraction of each bus's clean angle change.
    #[arg(long, default_value_t = 0.05, value_parser = nonnegative_f64)]
    noise: f64,
    /// Output CSV file; standard output when omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{s} is not finite"))
    }
}

fn positive_f64(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must be positive"))
    }
}

fn nonnegative_f64(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must not be negative"))
    }
}

fn unit_fraction(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is outside (0, 1]"))
    }
}

fn load_spread(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1)"))
    }
}

enum Failure {
    /// Bad invocation or unreadable input file; exit 2.
    Usage(String),
    /// Exit 1.
    Domain(lineout::Error),
}

impl From<lineout::Error> for Failure {
    fn from(e: lineout::Error) -> Self {
        Failure::Domain(e)
    }
}

type Outcome = Result<(), Failure>;

fn read_input(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

fn require_file(path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("no such file: {}", path.display())))
    }
}

fn load_case(arg: &CaseArg) -> Result<NetworkModel, Failure> {
    match &arg.case {
        Some(path) => Ok(parse_case(&read_input(path)?)?),
        None => Ok(ieee39()),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

fn converged_base(model: &NetworkModel, pf: &PowerFlowArgs) -> Result<lineout::powerflow::SteadyState, Failure> {
    let state = solve_power_flow(model, &pf.options())?;
    if !state.converged {
        return Err(lineout::Error::NotConverged {
            iterations: state.iterations,
            residual: state.residual,
        }
        .into());
    }
    Ok(state)
}

/// Placement plus the external bus numbers of its rows.
fn placement(model: &NetworkModel, args: &PlacementArgs) -> Result<(PmuPlacement, Vec<u64>), Failure> {
    let placement = match args.coverage {
        Some(c) => {
            log::info!("random placement with seed {}", args.seed);
            bench::sample_placement(model, c, args.seed)?
        }
        None => {
            let dense = args
                .pmus
                .iter()
                .map(|&b| model.bus_by_external(b).ok_or(lineout::Error::UnknownBus {
                    bus: b,
                    context: "the PMU list".into(),
                }))
                .collect::<Result<Vec<_>, _>>()?;
            PmuPlacement::new(dense, model.n_buses())?
        }
    };
    let numbers = placement.buses().iter().map(|&b| model.buses()[b - 1].external_id).collect();
    Ok((placement, numbers))
}

#[derive(Serialize)]
struct SolveReport {
    converged: bool,
    iterations: usize,
    residual: f64,
    bus: Vec<u64>,
    theta: Vec<f64>,
    vmag: Vec<f64>,
}

fn solve(args: &SolveArgs) -> Outcome {
    let model = load_case(&args.case)?;
    let state = solve_power_flow(&model, &args.pf.options())?;
    let report = SolveReport {
        converged: state.converged,
        iterations: state.iterations,
        residual: state.residual,
        bus: model.buses().iter().map(|b| b.external_id).collect(),
        theta: state.theta.clone(),
        vmag: state.vmag.clone(),
    };
    let text = if args.json {
        json(&report)
    } else {
        let mut s = String::from("bus,theta,vmag\n");
        for ((b, t), v) in report.bus.iter().zip(&report.theta).zip(&report.vmag) {
            let _ = writeln!(s, "{b},{},{}", fmt17(*t), fmt17(*v));
        }
        s
    };
    if state.converged {
        eprintln!("converged in {} iterations, residual {:e}", state.iterations, state.residual);
        emit(None, &text)
    } else {
        if args.json {
            emit(None, &text)?;
        }
        Err(lineout::Error::NotConverged {
            iterations: state.iterations,
            residual: state.residual,
        }
        .into())
    }
}

fn map(args: &MapArgs) -> Outcome {
    let model = load_case(&args.case)?;
    let (placement, numbers) = placement(&model, &args.placement)?;
    let map = if args.dc {
        dc_signature_map(&model, &placement)?
    } else {
        build_signature_map(&model, &converged_base(&model, &args.pf)?, &placement)?
    };
    emit(args.out.as_deref(), &io::write_map(&map, &numbers))
}

fn simulate(args: &SimulateArgs) -> Outcome {
    let model = load_case(&args.case)?;
    let (placement, numbers) = placement(&model, &args.placement)?;
    let mut lines = args.lines.clone();
    lines.sort_unstable();
    lines.dedup();
    if !model.remove_lines(&lines)?.is_connected() {
        return Err(lineout::Error::Config(format!("removing lines {lines:?} splits the network")).into());
    }
    let clean = bench::simulate_measurement(&model, &lines, &vec![1.0; model.n_buses()], &args.pf.options())?
        .ok_or_else(|| lineout::Error::Config(format!("power flow with lines {lines:?} removed did not converge")))?;
    let rows: Vec<usize> = placement.buses().iter().map(|b| b - 1).collect();
    let clean = clean.select_rows(&rows);
    let noise = NoiseModel {
        sigma_fraction: args.noise,
        ..NoiseModel::default()
    };
    let dtheta = if args.noise > 0.0 {
        let mut rng = bench::stream(args.placement.seed, &[0xd7]);
        let z = DVector::from_fn(clean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        noise.apply(&clean, &z)
    } else {
        clean
    };
    emit(args.out.as_deref(), &io::write_measurement(&numbers, &dtheta))
}

fn mdc(args: &MdcArgs) -> Outcome {
    require_file(&args.map)?;
    let file = io::read_map(&args.map)?;
    let mut s = String::new();
    if args.sweep {
        s.push_str("rho_star,diagnosability\n");
        for (rho, v) in mdc::diagnosability_sweep(&file.map, &TABLE_THRESHOLDS)? {
            let _ = writeln!(s, "{rho},{}", fmt17(v));
        }
    } else {
        let catalog = mdc::build_mdc(&file.map, args.rho)?;
        if !catalog.unobservable.is_empty() {
            eprintln!("lines with a constant signature (unobservable): {:?}", catalog.unobservable);
        }
        let _ = writeln!(s, "rho_star {}", args.rho);
        let _ = writeln!(s, "diagnosability {}", fmt17(catalog.diagnosability));
        for (id, cluster) in catalog.line_ids.iter().zip(&catalog.clusters) {
            let members: Vec<String> = cluster.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(s, "line {id}: {}", members.join(" "));
        }
    }
    emit(None, &s)
}

#[derive(Serialize)]
struct IdentifyReport<'a> {
    selected_lines: &'a [usize],
    coefficients: &'a [f64],
    lambdas: &'a [f64],
    rule: SelectionRule,
    degenerate: bool,
}

fn identify(args: &IdentifyArgs) -> Outcome {
    require_file(&args.map)?;
    require_file(&args.dtheta)?;
    let file = io::read_map(&args.map)?;
    let dtheta = io::read_measurement(&args.dtheta, &file)?;
    let result = lars::identify(&file.map, &dtheta, args.rule.rule(), args.rule.max_steps())?;
    let path = result.path.as_ref().expect("lasso result carries its path");
    if let Some(out) = &args.path_csv {
        emit(Some(out), &io::write_path(path))?;
    }
    let text = if args.json {
        json(&IdentifyReport {
            selected_lines: &result.selected_lines,
            coefficients: &result.coefficients,
            lambdas: &path.lambdas,
            rule: result.rule,
            degenerate: path.degenerate,
        })
    } else {
        let mut s = String::from("line,coefficient\n");
        for (l, c) in result.selected_lines.iter().zip(&result.coefficients) {
            let _ = writeln!(s, "{l},{}", fmt17(*c));
        }
        let lambdas: Vec<String> = path.lambdas.iter().map(|v| fmt17(*v)).collect();
        let _ = writeln!(s, "# lambda {}", lambdas.join(" "));
        s
    };
    if path.degenerate {
        log::warn!("the active Gram matrix was rank-deficient on part of the path");
    }
    emit(None, &text)
}

fn bench_cmd(args: &BenchArgs) -> Outcome {
    let model = load_case(&args.protocol.case)?;
    let mut config = args.protocol.config(args.coverage.clone(), args.noise);
    config.methods = args.methods.iter().map(|&m| m.into()).collect();
    config.methods.dedup();
    config.per_scenario = args.per_scenario.is_some();
    eprintln!("seed {}", config.seed);
    let report = bench::run_benchmark(&model, &config)?;
    if report.infeasible > 0 {
        log::warn!("{} simulations did not converge and were excluded", report.infeasible);
    }
    if let Some(path) = &args.summary_csv {
        emit(Some(path), &report.summary_csv())?;
    }
    if let (Some(path), Some(csv)) = (&args.per_scenario, report.per_scenario_csv()) {
        emit(Some(path), &csv)?;
    }
    let mut text = report.to_json();
    text.push('\n');
    emit(args.out.as_deref(), &text)
}

fn sweep_noise(args: &SweepNoiseArgs) -> Outcome {
    let model = load_case(&args.protocol.case)?;
    let config = args.protocol.config(vec![args.coverage], 0.0);
    eprintln!("seed {}", config.seed);
    let rows = bench::noise_sweep(&model, &config, &args.levels)?;
    let mut s = String::from("sigma_fraction,kind,mdc,median,q1,q3,mean,std,min,max,runs\n");
    for r in rows {
        let d = r.accuracy;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.sigma_fraction,
            kind_name(r.kind),
            r.mdc,
            fmt17(d.median),
            fmt17(d.q1),
            fmt17(d.q3),
            fmt17(d.mean),
            fmt17(d.std),
            fmt17(d.min),
            fmt17(d.max),
            d.count
        );
    }
    emit(args.out.as_deref(), &s)
}

fn sweep_rho(args: &SweepRhoArgs) -> Outcome {
    let model = load_case(&args.protocol.case)?;
    let config = args.protocol.config(vec![args.coverage], args.noise);
    eprintln!("seed {}", config.seed);
    let rows = bench::rho_sweep(&model, &config, &args.thresholds)?;
    let mut s = String::from("rho_star,v_mean,v_std,v_median");
    for k in &config.kinds {
        let _ = write!(s, ",{0}_median,{0}_mean", kind_name(*k));
    }
    s.push('\n');
    for r in rows {
        let d = r.diagnosability;
        let _ = write!(s, "{},{},{},{}", r.rho_star, fmt17(d.mean), fmt17(d.std), fmt17(d.median));
        for (_, a) in &r.accuracy {
            let _ = write!(s, ",{},{}", fmt17(a.median), fmt17(a.mean));
        }
        s.push('\n');
    }
    emit(args.out.as_deref(), &s)
}

fn kind_name(kind: OutageKind) -> &'static str {
    match kind {
        OutageKind::Single => "single",
        OutageKind::Double => "double",
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Solve(a) => solve(a),
        Command::Map(a) => map(a),
        Command::Simulate(a) => simulate(a),
        Command::Mdc(a) => mdc(a),
        Command::Identify(a) => identify(a),
        Command::Bench(a) => bench_cmd(a),
        Command::SweepNoise(a) => sweep_noise(a),
        Command::SweepRho(a) => sweep_rho(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
