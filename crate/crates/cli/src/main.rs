//! `ssop`: generate instances, simulate runs, sweep parameter grids, certify
//! bounds and play the lower-bound adversary.
//!
//! Exit codes: 0 on success, 1 when a bound is violated, 2 on usage or
//! input errors.

mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::ConfigFile;
use ssop_core::analysis::{lower_bound_game, report_run, summarize, sweep, write_csv, SweepConfig};
use ssop_core::instance::{generate_uniform, random_graph_metric, read_instance, write_instance};
use ssop_core::{
    classify_and_certify, optimum, simulate, Algorithm, AlgorithmConfig, MetricSpace, PredictorKind, ProblemKind,
    SolverKind,
};

#[derive(Parser)]
#[command(name = "ssop", version, about = "Online routing simulator with bound certification")]
struct Cli {
    /// Flat key = value file supplying defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random instance as JSON.
    Generate(GenerateArgs),
    /// Simulate one run and print its report.
    Run(RunArgs),
    /// Simulate one run, classify it and print trace plus certificate.
    Verify(RunArgs),
    /// Run a parameter grid over several instances and write a CSV report.
    Sweep(SweepArgs),
    /// Play the adaptive lower-bound adversary on the line.
    Lowerbound(LowerboundArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    /// line | plane | explicit
    #[arg(long)]
    space: Option<String>,
    /// Node count for explicit spaces.
    #[arg(long)]
    nodes: Option<usize>,
    /// oltsp | oldarp
    #[arg(long)]
    kind: Option<ProblemKind>,
    /// Release times are drawn from [0, horizon].
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AlgorithmArgs {
    /// ignore | smartstart | ssop
    #[arg(long)]
    algorithm: Option<Algorithm>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// oracle_best | fixed_late | fixed_early | adversarial_worst | random_flip:P:SEED
    #[arg(long)]
    predictor: Option<PredictorKind>,
    /// exact | christofides | nearest_neighbor
    #[arg(long)]
    solver: Option<SolverKind>,
}

#[derive(Args)]
struct RunArgs {
    instance: Option<PathBuf>,
    #[command(flatten)]
    alg: AlgorithmArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// Instance files; defaults to the config key `instances`.
    #[arg(long, value_delimiter = ',')]
    instances: Vec<PathBuf>,
    /// Generate this many instances instead (seeds `seed`, `seed + 1`, ...).
    #[arg(long)]
    generate: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    space: Option<String>,
    #[arg(long)]
    kind: Option<ProblemKind>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    algorithm: Option<Algorithm>,
    #[arg(long, value_delimiter = ',')]
    thetas: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    lambdas: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    predictors: Vec<PredictorKind>,
    #[arg(long)]
    solver: Option<SolverKind>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// CSV destination; stdout when absent.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LowerboundArgs {
    #[arg(long)]
    k: Option<usize>,
    #[command(flatten)]
    alg: AlgorithmArgs,
    /// Refuse lookahead predictors instead of letting them see the
    /// adversary's scripted prefix.
    #[arg(long)]
    no_lookahead: bool,
}

/// Marks errors caused by the invocation rather than by the run.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Returns `Ok(false)` when a bound was violated.
fn dispatch(cli: Cli) -> Result<bool> {
    let cfg = ConfigFile::load(cli.config.as_deref())?;
    match cli.command {
        Command::Generate(a) => cmd_generate(a, &cfg),
        Command::Run(a) => cmd_run(a, &cfg, false),
        Command::Verify(a) => cmd_run(a, &cfg, true),
        Command::Sweep(a) => cmd_sweep(a, &cfg),
        Command::Lowerbound(a) => cmd_lowerbound(a, &cfg),
    }
}

fn build_space(name: &str, seed: u64, nodes: usize) -> Result<MetricSpace> {
    match name {
        "line" => Ok(MetricSpace::Line),
        "plane" => Ok(MetricSpace::Plane),
        "explicit" => Ok(random_graph_metric(seed, nodes)),
        other => Err(usage(format!("unknown space {other:?} (expected line|plane|explicit)"))),
    }
}

fn cmd_generate(a: GenerateArgs, cfg: &ConfigFile) -> Result<bool> {
    let seed = cfg.pick(a.seed, "seed")?.unwrap_or(0);
    let n = cfg.pick(a.n, "n")?.ok_or_else(|| usage("--n is required"))?;
    let space_name = cfg.pick(a.space, "space")?.unwrap_or_else(|| "line".into());
    let nodes = cfg.pick(a.nodes, "nodes")?.unwrap_or(8);
    let kind = cfg.pick(a.kind, "kind")?.unwrap_or(ProblemKind::Oltsp);
    let horizon = cfg.pick(a.horizon, "horizon")?.unwrap_or(4.0);
    let out: PathBuf = cfg.pick(a.out, "out")?.ok_or_else(|| usage("-o/--out is required"))?;
    let space = build_space(&space_name, seed, nodes)?;
    let inst = generate_uniform(seed, n, &space, horizon, kind).map_err(|e| usage(e.to_string()))?;
    write_instance(&inst, &out)?;
    println!("{} {}", out.display(), inst.len());
    Ok(true)
}

fn resolve_algorithm(a: AlgorithmArgs, cfg: &ConfigFile) -> Result<(AlgorithmConfig, Option<PredictorKind>)> {
    let algorithm = cfg.pick(a.algorithm, "algorithm")?.ok_or_else(|| usage("--algorithm is required"))?;
    let solver = cfg.pick(a.solver, "solver")?.unwrap_or(SolverKind::Exact);
    let theta = cfg.pick(a.theta, "theta")?;
    let lambda = cfg.pick(a.lambda, "lambda")?;
    let predictor = cfg.pick(a.predictor, "predictor")?;
    let need_theta = || theta.ok_or_else(|| usage(format!("--theta is required for {algorithm}")));
    let config = match algorithm {
        Algorithm::Ignore => AlgorithmConfig::ignore(solver),
        Algorithm::SmartStart => AlgorithmConfig::smartstart(need_theta()?, solver).map_err(|e| usage(e.to_string()))?,
        Algorithm::Ssop => {
            let lambda = lambda.ok_or_else(|| usage("--lambda is required for ssop"))?;
            if predictor.is_none() {
                return Err(usage("--predictor is required for ssop"));
            }
            AlgorithmConfig::ssop(need_theta()?, lambda, solver).map_err(|e| usage(e.to_string()))?
        }
    };
    if algorithm != Algorithm::Ssop && predictor.is_some() {
        return Err(usage(format!("{algorithm} takes no predictor")));
    }
    Ok((config, predictor))
}

fn cmd_run(a: RunArgs, cfg: &ConfigFile, verify: bool) -> Result<bool> {
    let path: PathBuf = cfg.pick(a.instance, "instance")?.ok_or_else(|| usage("an instance path is required"))?;
    let inst = read_instance(&path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let (config, predictor) = resolve_algorithm(a.alg, cfg)?;
    let trace = simulate(&inst, &config, predictor.as_ref()).map_err(|e| usage(e.to_string()))?;
    let opt = optimum(&inst).context("offline optimum")?;
    let report = if verify {
        classify_and_certify(&trace, &opt).map_err(|e| usage(e.to_string()))?
    } else {
        report_run(&trace, &opt)?
    };
    let mut out = json!({
        "instance": path.display().to_string(),
        "algorithm": config.algorithm,
        "theta": config.theta,
        "lambda": config.lambda,
        "predictor": predictor.as_ref().map(ToString::to_string),
        "solver": config.solver,
        "n": inst.len(),
        "report": report,
    });
    if verify {
        out["trace"] = serde_json::to_value(&trace)?;
        out["opt"] = serde_json::to_value(&opt)?;
    }
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(!(report.violated || report.run_violated))
}

fn cmd_sweep(a: SweepArgs, cfg: &ConfigFile) -> Result<bool> {
    let files: Vec<PathBuf> = cfg.pick_list(a.instances, "instances")?;
    let generated = cfg.pick(a.generate, "generate")?;
    let mut instances = Vec::new();
    for p in &files {
        let inst = read_instance(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
        let id = p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
        instances.push((id, inst));
    }
    if let Some(count) = generated {
        let seed = cfg.pick(a.seed, "seed")?.unwrap_or(0);
        let n = cfg.pick(a.n, "n")?.unwrap_or(6);
        let space_name = cfg.pick(a.space, "space")?.unwrap_or_else(|| "plane".into());
        let kind = cfg.pick(a.kind, "kind")?.unwrap_or(ProblemKind::Oltsp);
        let horizon = cfg.pick(a.horizon, "horizon")?.unwrap_or(4.0);
        for i in 0..count as u64 {
            let s = seed + i;
            let space = build_space(&space_name, s, 8)?;
            let inst = generate_uniform(s, n, &space, horizon, kind).map_err(|e| usage(e.to_string()))?;
            instances.push((format!("gen{s}"), inst));
        }
    }
    if instances.is_empty() {
        return Err(usage("no instances: give --instances or --generate"));
    }
    let sweep_cfg = SweepConfig {
        algorithm: cfg.pick(a.algorithm, "algorithm")?.unwrap_or(Algorithm::Ssop),
        thetas: cfg.pick_list(a.thetas, "thetas")?,
        lambdas: cfg.pick_list(a.lambdas, "lambdas")?,
        predictors: cfg.pick_list(a.predictors, "predictors")?,
        solver: cfg.pick(a.solver, "solver")?.unwrap_or(SolverKind::Exact),
        jobs: cfg.pick(a.jobs, "jobs")?.unwrap_or(1),
    };
    if sweep_cfg.algorithm == Algorithm::Ssop {
        for &theta in &sweep_cfg.thetas {
            for &lambda in sweep_cfg.lambdas.iter().filter(|&&l| !(l * theta > 1.0 && l <= 1.0)) {
                eprintln!("skipping theta = {theta}, lambda = {lambda}: lambda must lie in (1/theta, 1]");
            }
        }
    }
    let rows = sweep(&instances, &sweep_cfg).map_err(|e| usage(e.to_string()))?;
    match cfg.pick::<PathBuf>(a.out, "out")? {
        Some(path) => write_csv(&rows, std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?)?,
        None => write_csv(&rows, std::io::stdout().lock())?,
    }
    let mut err = std::io::stderr().lock();
    let mut any_violation = false;
    writeln!(err, "theta      lambda     runs  max_ratio  bound")?;
    for c in summarize(&rows) {
        any_violation |= c.violations > 0;
        let bound = c.run_bound.map_or_else(|| "-".to_string(), |b| format!("{b:.6}"));
        writeln!(err, "{:<10.6} {:<10.6} {:<5} {:<10.6} {bound}", c.theta, c.lambda, c.runs, c.max_ratio)?;
    }
    writeln!(err, "{} rows, violations: {}", rows.len(), if any_violation { "yes" } else { "none" })?;
    Ok(!any_violation)
}

fn cmd_lowerbound(a: LowerboundArgs, cfg: &ConfigFile) -> Result<bool> {
    let k = cfg.pick(a.k, "k")?.ok_or_else(|| usage("--k is required"))?;
    if k == 0 {
        return Err(usage("--k must be positive"));
    }
    let (config, predictor) = resolve_algorithm(a.alg, cfg)?;
    let report = if a.no_lookahead {
        let run = ssop_core::engine::simulate_adversary(k, &config, predictor.as_ref(), false)
            .map_err(|e| usage(e.to_string()))?;
        let inst = run.instance.as_ref().expect("adversary run keeps its instance");
        let opt = optimum(inst)?;
        let ratio = run.trace.completion_time / opt.completion_time;
        let bound = run.case.analyzed().then_some(2.0 - 1.0 / k as f64);
        json!({
            "k": k, "t1": run.t1, "case": run.case, "alg_cost": run.trace.completion_time,
            "opt_cost": opt.completion_time, "ratio": ratio, "asserted_bound": bound,
            "holds": bound.is_none_or(|b| ratio >= b - ssop_core::CERT_TOL),
        })
    } else {
        serde_json::to_value(lower_bound_game(k, &config, predictor.as_ref()).map_err(|e| usage(e.to_string()))?)?
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(report["holds"].as_bool().unwrap_or(true))
}
