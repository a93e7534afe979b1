//! `circpoc` command-line tool.
//!
//! Single values go to stdout as JSON; time series are written as CSV under
//! `--out` next to a manifest recording everything needed to rerun them.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use circpoc::geometry::cover_rectangle;
use circpoc::mcs::{mcs_poc, mcs_poc_circles};
use circpoc::scenarios::{
    accuracy_study, run_overtaking, run_poc_scenario, runtime_benchmark, AccuracyConfig, BenchmarkConfig, OvertakingLevel, OvertakingSpec,
    PocBackend, ScenarioSpec,
};
use circpoc::{GaussianBelief, HeadingTruncation, PocEstimator, RectangleFootprint, SeededSampler};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use manifest::{Outputs, RunManifest, SCHEMA_VERSION};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Internal(String),
}

impl From<circpoc::Error> for CliError {
    fn from(e: circpoc::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

/// Probability of collision between two rectangular vehicles.
#[derive(Parser)]
#[command(name = "circpoc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the collision probability with the circle-cover estimator.
    Poc(PocArgs),
    /// Estimate it by Monte Carlo sampling on the exact rectangles.
    Oracle(OracleArgs),
    /// Compare the estimator with the oracle along a scenario.
    Scenario(ScenarioArgs),
    /// Time the estimator and the oracle.
    Bench(BenchArgs),
    /// Estimator against repeated oracle runs at fixed uncertainty levels.
    Accuracy(AccuracyArgs),
    /// Closed-loop overtaking with the collision-probability constrained planner.
    Smpc(SmpcArgs),
    /// Write the built-in scenario and overtaking specs as JSON.
    Specs(SpecsArgs),
}

/// `LxW`, e.g. `4.5x2`.
#[derive(Debug, Clone, Copy)]
struct Dims(f64, f64);

impl FromStr for Dims {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (l, w) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected LxW, got {s:?}"))?;
        let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
        Ok(Dims(num(l)?, num(w)?))
    }
}

fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',').map(|v| v.trim().parse::<T>().map_err(|e| format!("{v:?}: {e}"))).collect()
}

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    let v = parse_list::<f64>(s)?;
    v.try_into().map_err(|v: Vec<f64>| format!("expected 3 comma-separated values, got {}", v.len()))
}

fn parse_pair(s: &str) -> Result<[usize; 2], String> {
    let v = parse_list::<usize>(s)?;
    v.try_into().map_err(|v: Vec<usize>| format!("expected 2 comma-separated values, got {}", v.len()))
}

#[derive(Args)]
struct BeliefArgs {
    /// Ego footprint, length x width in meters.
    #[arg(long, default_value = "4.5x2")]
    ego: Dims,
    /// Object footprint, length x width in meters.
    #[arg(long, default_value = "4.5x2")]
    obj: Dims,
    /// Mean object configuration `x,y,theta` in the ego frame.
    #[arg(long, value_parser = parse_triple, allow_hyphen_values = true)]
    mu: [f64; 3],
    /// Standard deviations `sx,sy,stheta`, all > 0.
    #[arg(long, value_parser = parse_triple)]
    sigma: [f64; 3],
}

impl BeliefArgs {
    fn resolve(&self) -> CliResult<(RectangleFootprint, RectangleFootprint, GaussianBelief)> {
        let ego = RectangleFootprint::new(self.ego.0, self.ego.1).map_err(|e| CliError::Input(format!("--ego: {e}")))?;
        let obj = RectangleFootprint::new(self.obj.0, self.obj.1).map_err(|e| CliError::Input(format!("--obj: {e}")))?;
        Ok((ego, obj, GaussianBelief::new(self.mu, self.sigma)?))
    }
}

#[derive(Args)]
struct PocArgs {
    #[command(flatten)]
    belief: BeliefArgs,
    /// Circle counts `ego,object`.
    #[arg(long, value_parser = parse_pair, default_value = "3,3")]
    circles: [usize; 2],
    /// Grid samples per polar axis.
    #[arg(long, default_value_t = 20)]
    grid: usize,
    /// Wrapped-Gaussian copies kept on each side (at least 3).
    #[arg(long, default_value_t = 3)]
    nbeta: u32,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    belief: BeliefArgs,
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
    #[arg(long, env = "CIRCPOC_SEED", default_value_t = 0)]
    seed: u64,
    /// Sample the union of circle covers `ego,object` instead of the rectangles.
    #[arg(long, value_parser = parse_pair)]
    circles: Option<[usize; 2]>,
}

#[derive(Args)]
struct OutArgs {
    /// Output directory.
    #[arg(long, env = "CIRCPOC_OUT", default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario spec (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Circle counts to compare, used for both vehicles.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    circles: Vec<usize>,
    #[arg(long, default_value_t = 100_000)]
    oracle_samples: u64,
    #[arg(long, env = "CIRCPOC_SEED", default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// Full benchmark config (JSON); flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    circles: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    mcs_samples: Option<Vec<u64>>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    evaluations: Option<usize>,
    #[arg(long)]
    batches: Option<usize>,
    #[arg(long, env = "CIRCPOC_SEED")]
    seed: Option<u64>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct AccuracyArgs {
    /// Full accuracy config (JSON); flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    circles: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    mcs_samples: Option<Vec<u64>>,
    #[arg(long)]
    repetitions: Option<usize>,
    /// Samples of the reference estimate; 0 skips it.
    #[arg(long)]
    reference_samples: Option<u64>,
    #[arg(long, env = "CIRCPOC_SEED")]
    seed: Option<u64>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Analytic,
    Mcs,
}

impl From<Backend> for PocBackend {
    fn from(b: Backend) -> Self {
        match b {
            Backend::Analytic => PocBackend::Analytic,
            Backend::Mcs => PocBackend::Mcs,
        }
    }
}

#[derive(Args)]
struct SmpcArgs {
    /// Overtaking spec (JSON).
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, value_enum, default_value = "analytic")]
    backend: Backend,
    /// Overrides the spec's sampling seed.
    #[arg(long, env = "CIRCPOC_SEED")]
    seed: Option<u64>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct SpecsArgs {
    #[command(flatten)]
    out: OutArgs,
}

fn read_config<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("--config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("--config {}: {e}", path.display())))
}

fn print_json(value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn millis(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn cmd_poc(a: &PocArgs) -> CliResult<ExitCode> {
    let (ego, obj, belief) = a.belief.resolve()?;
    let trunc = HeadingTruncation::new(a.nbeta).map_err(|e| CliError::Input(format!("--nbeta: {e}")))?;
    let t = Instant::now();
    let est =
        PocEstimator::new(&ego, &obj, a.circles[0], a.circles[1], a.grid).map_err(|e| CliError::Input(format!("--circles/--grid: {e}")))?;
    let init_ms = millis(t);
    let t = Instant::now();
    let poc = est.estimate(&belief, trunc);
    let eval_ms = millis(t);
    print_json(&json!({ "schema_version": SCHEMA_VERSION, "poc": poc, "init_ms": init_ms, "eval_ms": eval_ms }))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_oracle(a: &OracleArgs) -> CliResult<ExitCode> {
    let (ego, obj, belief) = a.belief.resolve()?;
    if a.samples == 0 {
        return Err(CliError::Input("--samples: must be at least 1".into()));
    }
    let mut sampler = SeededSampler::new(a.seed);
    let t = Instant::now();
    let result = match a.circles {
        None => mcs_poc(&ego, &obj, &belief, a.samples, &mut sampler),
        Some([ne, no]) => {
            let ce = cover_rectangle(&ego, ne).map_err(|e| CliError::Input(format!("--circles: {e}")))?;
            let co = cover_rectangle(&obj, no).map_err(|e| CliError::Input(format!("--circles: {e}")))?;
            mcs_poc_circles(&ce, &co, &belief, a.samples, &mut sampler)
        }
    };
    let eval_ms = millis(t);
    print_json(&json!({
        "schema_version": SCHEMA_VERSION,
        "estimate": result.estimate,
        "n_samples": result.n_samples,
        "std_error": result.std_error,
        "seed": result.seed,
        "eval_ms": eval_ms,
    }))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_scenario(a: &ScenarioArgs, m: &mut RunManifest) -> CliResult<ExitCode> {
    let spec = ScenarioSpec::load(&a.spec).map_err(|e| CliError::Input(format!("--spec: {e}")))?;
    let report = run_poc_scenario(&spec, &a.circles, a.oracle_samples, a.seed)?;
    let peaks: Vec<f64> =
        a.circles.iter().map(|&n| report.analytic_series(n).unwrap_or_default().into_iter().fold(0.0, f64::max)).collect();
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "scenario": report.scenario,
        "sample_time": report.sample_time,
        "steps": report.steps,
        "duration": report.sample_time * report.steps as f64,
        "circle_counts": report.circle_counts,
        "oracle_samples": report.oracle_samples,
        "delta_e": report.delta_e,
        "peak_poc": peaks,
        "peak_oracle": report.oracle_series().into_iter().fold(0.0, f64::max),
        "max_oracle_std_error": report.max_oracle_std_error,
        "init_seconds": report.init_seconds,
        "analytic_eval_seconds": report.analytic_eval_seconds,
        "oracle_eval_seconds": report.oracle_eval_seconds,
    });
    let mut out = Outputs::new(&a.out.out)?;
    let stem = format!("scenario_{}", spec.name);
    out.write(&format!("{stem}.csv"), &report.to_csv())?;
    out.write_json(&format!("{stem}.summary.json"), &summary)?;
    m.config = json!({ "spec": spec, "circles": a.circles, "oracle_samples": a.oracle_samples });
    m.seed = Some(a.seed);
    m.finish(&mut out, &stem)?;
    print_json(&summary)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(a: &BenchArgs, m: &mut RunManifest) -> CliResult<ExitCode> {
    let mut cfg: BenchmarkConfig = read_config(a.config.as_deref())?;
    if let Some(v) = &a.circles {
        cfg.circle_counts = v.clone();
    }
    if let Some(v) = &a.mcs_samples {
        cfg.mcs_samples = v.clone();
    }
    cfg.grid_samples = a.grid.unwrap_or(cfg.grid_samples);
    cfg.evaluations = a.evaluations.unwrap_or(cfg.evaluations);
    cfg.batches = a.batches.unwrap_or(cfg.batches);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    let table = runtime_benchmark(&cfg)?;
    let mut out = Outputs::new(&a.out.out)?;
    out.write("bench.csv", &table.to_csv())?;
    m.config = serde_json::to_value(&cfg).map_err(|e| CliError::Internal(e.to_string()))?;
    m.seed = Some(cfg.seed);
    m.finish(&mut out, "bench")?;
    print_json(&json!({ "schema_version": SCHEMA_VERSION, "timings": table }))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_accuracy(a: &AccuracyArgs, m: &mut RunManifest) -> CliResult<ExitCode> {
    let mut cfg: AccuracyConfig = read_config(a.config.as_deref())?;
    if let Some(v) = &a.circles {
        cfg.circle_counts = v.clone();
    }
    if let Some(v) = &a.mcs_samples {
        cfg.mcs_samples = v.clone();
    }
    cfg.repetitions = a.repetitions.unwrap_or(cfg.repetitions);
    cfg.reference_samples = a.reference_samples.unwrap_or(cfg.reference_samples);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    let table = accuracy_study(&cfg)?;
    let mut out = Outputs::new(&a.out.out)?;
    out.write("accuracy.csv", &table.to_csv())?;
    m.config = serde_json::to_value(&cfg).map_err(|e| CliError::Internal(e.to_string()))?;
    m.seed = Some(cfg.seed);
    m.finish(&mut out, "accuracy")?;
    print_json(&json!({ "schema_version": SCHEMA_VERSION, "accuracy": table }))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_smpc(a: &SmpcArgs, m: &mut RunManifest) -> CliResult<ExitCode> {
    let mut spec = OvertakingSpec::load(&a.spec).map_err(|e| CliError::Input(format!("--spec: {e}")))?;
    spec.seed = a.seed.unwrap_or(spec.seed);
    let backend = PocBackend::from(a.backend);
    let log = run_overtaking(&spec, backend, None)?;
    let backend_name = match backend {
        PocBackend::Analytic => "analytic",
        PocBackend::Mcs => "mcs",
    };
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "spec": spec.name,
        "backend": backend_name,
        "steps": log.records.len(),
        "infeasible_steps": log.infeasible_steps(),
        "min_distance": log.min_distance(),
        "max_certified_poc": log.records.iter().map(|r| r.max_poc).fold(0.0, f64::max),
    });
    let mut out = Outputs::new(&a.out.out)?;
    let stem = format!("smpc_{}_{backend_name}", spec.name);
    out.write(&format!("{stem}.csv"), &log.to_csv())?;
    out.write_json(&format!("{stem}.summary.json"), &summary)?;
    m.config = json!({ "spec": spec, "backend": backend_name });
    m.seed = Some(spec.seed);
    m.finish(&mut out, &stem)?;
    print_json(&summary)?;
    Ok(if log.infeasible_steps() > 0 { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn cmd_specs(a: &SpecsArgs, m: &mut RunManifest) -> CliResult<ExitCode> {
    let mut out = Outputs::new(&a.out.out)?;
    for spec in ScenarioSpec::built_ins() {
        out.write_json(&format!("{}.json", spec.name), &spec)?;
    }
    for level in OvertakingLevel::ALL {
        let spec = OvertakingSpec::new(level);
        out.write_json(&format!("{}.json", spec.name), &spec)?;
    }
    m.finish(&mut out, "specs")?;
    print_json(&json!({ "schema_version": SCHEMA_VERSION, "written": m.outputs }))?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: &Cli) -> CliResult<ExitCode> {
    let mut m = RunManifest::start();
    match &cli.command {
        Command::Poc(a) => cmd_poc(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Scenario(a) => cmd_scenario(a, &mut m),
        Command::Bench(a) => cmd_bench(a, &mut m),
        Command::Accuracy(a) => cmd_accuracy(a, &mut m),
        Command::Smpc(a) => cmd_smpc(a, &mut m),
        Command::Specs(a) => cmd_specs(a, &mut m),
    }
}

fn main() -> ExitCode {
    std::panic::set_hook(Box::new(|info| {
        eprintln!("internal error: {info}");
        std::process::exit(3);
    }));
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Input(_) => 2,
                CliError::Internal(_) => 3,
            })
        }
    }
}
