//! Closed-form competitive bounds, per-run case classification with its
//! cost certificate, parameter sweeps and the lower-bound game report.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{simulate, simulate_adversary, Algorithm, AlgorithmConfig, EngineError, Gadget, Trace};
use crate::instance::{AdversaryCase, Instance};
use crate::offline::{optimum, OptError, OptResult};
use crate::predictor::PredictorKind;
use crate::schedule::SolverKind;
use crate::CERT_TOL;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("parameter out of domain: {0}")]
    Domain(String),
    #[error("case certificates apply to SmartStart and SSOP runs, not {0}")]
    NotCertifiable(Algorithm),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Opt(#[from] OptError),
    #[error("sweep worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The bound family for given `(theta, rho, lambda)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct BoundSet {
    pub theta: f64,
    pub rho: f64,
    pub lambda: f64,
    pub A: f64,
    pub B: f64,
    pub C: f64,
    pub lambda_A: f64,
    pub B_lambda: f64,
    pub C_lambda: f64,
    pub A_over_lambda: f64,
    pub B_inv_lambda: f64,
    pub C_inv_lambda: f64,
}

impl BoundSet {
    pub fn new(theta: f64, rho: f64, lambda: f64) -> Result<Self, AnalysisError> {
        if !(theta.is_finite() && theta > 1.0 && rho.is_finite() && rho >= 1.0 && theta >= rho) {
            return Err(AnalysisError::Domain(format!("need theta > 1 and theta >= rho >= 1, got theta = {theta}, rho = {rho}")));
        }
        if !(lambda * theta > 1.0 && lambda <= 1.0) {
            return Err(AnalysisError::Domain(format!("need lambda in (1/theta, 1], got {lambda}")));
        }
        Ok(Self::eval(theta, rho, lambda))
    }

    fn eval(theta: f64, rho: f64, lambda: f64) -> Self {
        let b = |kappa: f64| rho * (1.0 + 1.0 / (kappa - 1.0));
        BoundSet {
            theta,
            rho,
            lambda,
            A: theta,
            B: b(theta),
            C: theta / 2.0 + rho,
            lambda_A: lambda * theta,
            B_lambda: b(theta / lambda),
            C_lambda: lambda * theta / 2.0 + rho,
            A_over_lambda: theta / lambda,
            B_inv_lambda: b(lambda * theta),
            C_inv_lambda: theta / (2.0 * lambda) + rho,
        }
    }

    /// SSOP consistency ratio with `eps_f / opt` folded in.
    pub fn consistency_ratio(&self, eps_over_opt: f64) -> f64 {
        (self.lambda_A * (1.0 + eps_over_opt)).max(self.B_lambda + eps_over_opt).max(self.C_lambda)
    }

    pub fn robustness_ratio(&self) -> f64 {
        self.A_over_lambda.max(self.B_inv_lambda).max(self.C_inv_lambda)
    }

    pub fn smartstart_ratio(&self) -> f64 {
        self.A.max(self.B).max(self.C)
    }
}

pub fn smartstart_bound(theta: f64, rho: f64) -> Result<f64, AnalysisError> {
    Ok(BoundSet::new(theta, rho, 1.0)?.smartstart_ratio())
}

/// The waiting factor minimizing [`smartstart_bound`].
pub fn optimal_theta(rho: f64) -> f64 {
    (1.0 + (1.0 + 8.0 * rho).sqrt()) / 2.0
}

/// `(consistency, robustness)` cost bounds of an SSOP run.
pub fn ssop_bounds(theta: f64, rho: f64, lambda: f64, eps_f: f64, opt: f64) -> Result<(f64, f64), AnalysisError> {
    if !(opt > 0.0 && opt.is_finite()) {
        return Err(AnalysisError::Domain(format!("opt must be positive, got {opt}")));
    }
    if !(eps_f >= 0.0 && eps_f.is_finite()) {
        return Err(AnalysisError::Domain(format!("eps_f must be nonnegative, got {eps_f}")));
    }
    let b = BoundSet::new(theta, rho, lambda)?;
    let consistency = (b.lambda_A * opt + b.lambda_A * eps_f).max(b.B_lambda * opt + eps_f).max(b.C_lambda * opt);
    Ok((consistency, b.robustness_ratio() * opt))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CaseLabel {
    W1,
    W2,
    W3,
    W4,
    W5,
    W6,
    #[serde(rename = "K1-late")]
    K1Late,
    #[serde(rename = "K1-early")]
    K1Early,
    #[serde(rename = "K2-late")]
    K2Late,
    #[serde(rename = "K2-early")]
    K2Early,
    #[serde(rename = "empty")]
    Empty,
}

impl CaseLabel {
    /// The ten labels a nonempty run can receive.
    pub const NONEMPTY: [CaseLabel; 10] = [
        CaseLabel::W1,
        CaseLabel::W2,
        CaseLabel::W3,
        CaseLabel::W4,
        CaseLabel::W5,
        CaseLabel::W6,
        CaseLabel::K1Late,
        CaseLabel::K1Early,
        CaseLabel::K2Late,
        CaseLabel::K2Early,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CaseLabel::W1 => "W1",
            CaseLabel::W2 => "W2",
            CaseLabel::W3 => "W3",
            CaseLabel::W4 => "W4",
            CaseLabel::W5 => "W5",
            CaseLabel::W6 => "W6",
            CaseLabel::K1Late => "K1-late",
            CaseLabel::K1Early => "K1-early",
            CaseLabel::K2Late => "K2-late",
            CaseLabel::K2Early => "K2-early",
            CaseLabel::Empty => "empty",
        }
    }
}

impl fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub alg_cost: f64,
    pub opt_cost: f64,
    pub ratio: f64,
    pub eps_f: f64,
    pub case_label: CaseLabel,
    /// Per-case cost bound; absent when the solver has no guarantee.
    pub certified_bound: Option<f64>,
    pub slack: Option<f64>,
    pub violated: bool,
    /// Whole-run ratio bound (robustness for SSOP, the SmartStart ratio).
    pub run_bound: Option<f64>,
    pub run_violated: bool,
    /// Clean consistency ratio `max{lambda A, B_lambda, C_lambda}` without
    /// the `eps_f` terms, reported for reference only.
    pub clean_consistency: Option<f64>,
    pub uncertifiable: bool,
}

/// Classifies a SmartStart or SSOP run into its proof case and checks the
/// case's cost bound. SmartStart is checked as SSOP with `lambda = 1` and
/// every gadget Late (both thresholds coincide).
pub fn classify_and_certify(trace: &Trace, opt: &OptResult) -> Result<RunReport, AnalysisError> {
    let cfg = &trace.config;
    if cfg.algorithm == Algorithm::Ignore {
        return Err(AnalysisError::NotCertifiable(cfg.algorithm));
    }
    let alg = trace.completion_time;
    let opt_cost = opt.completion_time;
    let Some(fin) = trace.final_schedule() else {
        return Ok(RunReport {
            alg_cost: alg,
            opt_cost,
            ratio: 1.0,
            eps_f: 0.0,
            case_label: CaseLabel::Empty,
            certified_bound: Some(0.0),
            slack: Some(0.0),
            violated: false,
            run_bound: None,
            run_violated: false,
            clean_consistency: None,
            uncertifiable: false,
        });
    };
    let gadget = |g: Option<Gadget>| g.unwrap_or(Gadget::Late);
    let (t_hat, t_prime, t_n) = (fin.ssop_start, fin.smartstart_ref_start, trace.last_arrival);
    let eps = trace.eps_f;

    let label = if !trace.server_working_at_tn {
        match gadget(fin.gadget) {
            Gadget::Late if t_prime <= t_n && t_n <= t_hat => CaseLabel::W1,
            Gadget::Late if t_n < t_prime => CaseLabel::W2,
            Gadget::Late => CaseLabel::W3,
            Gadget::Early if t_hat <= t_n && t_n <= t_prime => CaseLabel::W4,
            Gadget::Early if t_n < t_hat => CaseLabel::W5,
            Gadget::Early => CaseLabel::W6,
        }
    } else {
        let pen = trace.penultimate_schedule().expect("a schedule running at t_n defers the last request");
        if t_hat > pen.actual_start + pen.route.length {
            match gadget(fin.gadget) {
                Gadget::Late => CaseLabel::K1Late,
                Gadget::Early => CaseLabel::K1Early,
            }
        } else {
            match gadget(pen.gadget) {
                Gadget::Late => CaseLabel::K2Late,
                Gadget::Early => CaseLabel::K2Early,
            }
        }
    };

    let ratio = if opt_cost > 0.0 { alg / opt_cost } else { 1.0 };
    let Some(rho) = cfg.rho else {
        return Ok(RunReport {
            alg_cost: alg,
            opt_cost,
            ratio,
            eps_f: eps,
            case_label: label,
            certified_bound: None,
            slack: None,
            violated: false,
            run_bound: None,
            run_violated: false,
            clean_consistency: None,
            uncertifiable: true,
        });
    };
    let b = BoundSet::new(cfg.theta, rho, cfg.lambda)?;
    let o = opt_cost;
    let bound = match label {
        CaseLabel::W1 | CaseLabel::W2 | CaseLabel::K1Late => {
            (b.lambda_A * o + b.lambda_A * eps).min(b.B_inv_lambda * o)
        }
        CaseLabel::W3 => b.lambda_A * o,
        CaseLabel::W4 | CaseLabel::W6 => (b.B_lambda * o + eps).min(b.A_over_lambda * o),
        CaseLabel::W5 | CaseLabel::K1Early => b.B_lambda * o,
        CaseLabel::K2Late => b.C_lambda * o,
        CaseLabel::K2Early => b.C_inv_lambda * o,
        CaseLabel::Empty => unreachable!(),
    };
    let run_bound = if cfg.algorithm == Algorithm::SmartStart { b.smartstart_ratio() } else { b.robustness_ratio() };
    Ok(RunReport {
        alg_cost: alg,
        opt_cost,
        ratio,
        eps_f: eps,
        case_label: label,
        certified_bound: Some(bound),
        slack: Some(bound - alg),
        violated: alg > bound + CERT_TOL,
        run_bound: Some(run_bound),
        run_violated: ratio > run_bound + CERT_TOL,
        clean_consistency: Some(b.lambda_A.max(b.B_lambda).max(b.C_lambda)),
        uncertifiable: false,
    })
}

/// Report for a run of any algorithm: certified where possible, otherwise
/// just the ratio (Ignore has no case structure).
pub fn report_run(trace: &Trace, opt: &OptResult) -> Result<RunReport, AnalysisError> {
    if trace.config.algorithm != Algorithm::Ignore {
        return classify_and_certify(trace, opt);
    }
    let alg = trace.completion_time;
    let ratio = if opt.completion_time > 0.0 { alg / opt.completion_time } else { 1.0 };
    Ok(RunReport {
        alg_cost: alg,
        opt_cost: opt.completion_time,
        ratio,
        eps_f: trace.eps_f,
        case_label: if trace.schedules.is_empty() { CaseLabel::Empty } else { CaseLabel::W3 },
        certified_bound: None,
        slack: None,
        violated: false,
        run_bound: None,
        run_violated: false,
        clean_consistency: None,
        uncertifiable: true,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub algorithm: Algorithm,
    pub thetas: Vec<f64>,
    /// Filtered to `(1/theta, 1]` per theta; ignored unless SSOP.
    pub lambdas: Vec<f64>,
    /// Ignored unless SSOP.
    pub predictors: Vec<PredictorKind>,
    pub solver: SolverKind,
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub instance_id: String,
    pub algorithm: Algorithm,
    pub theta: f64,
    pub lambda: f64,
    pub predictor: String,
    pub solver: SolverKind,
    pub n: usize,
    pub report: RunReport,
}

pub const CSV_HEADER: &str =
    "instance_id,algorithm,theta,lambda,predictor,solver,n,alg_cost,opt_cost,ratio,eps_f,case,bound,slack,violated";

/// Formats with 9 significant digits.
pub fn sig9(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let s = format!("{:.8e}", x);
    let v: f64 = s.parse().expect("formatted float parses");
    let exp = v.abs().log10().floor() as i32;
    if (-5..15).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let fixed = format!("{v:.decimals$}");
        if fixed.contains('.') {
            fixed.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            fixed
        }
    } else {
        s
    }
}

impl SweepRow {
    pub fn csv_line(&self) -> String {
        let r = &self.report;
        let opt_f = |x: Option<f64>| x.map(sig9).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.instance_id,
            self.algorithm,
            sig9(self.theta),
            sig9(self.lambda),
            self.predictor,
            self.solver.name(),
            self.n,
            sig9(r.alg_cost),
            sig9(r.opt_cost),
            sig9(r.ratio),
            sig9(r.eps_f),
            r.case_label,
            opt_f(r.certified_bound),
            opt_f(r.slack),
            r.violated
        )
    }
}

pub fn write_csv(rows: &[SweepRow], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_line())?;
    }
    Ok(())
}

struct Job<'a> {
    instance_index: usize,
    config: AlgorithmConfig,
    predictor: Option<&'a PredictorKind>,
}

/// Runs every (instance, theta, lambda, predictor) combination; rows come
/// back in that nesting order whatever the worker count.
pub fn sweep(instances: &[(String, Instance)], config: &SweepConfig) -> Result<Vec<SweepRow>, AnalysisError> {
    if config.thetas.is_empty() {
        return Err(AnalysisError::Domain("empty theta grid".into()));
    }
    let ssop = config.algorithm == Algorithm::Ssop;
    if ssop && (config.lambdas.is_empty() || config.predictors.is_empty()) {
        return Err(AnalysisError::Domain("SSOP sweeps need lambda and predictor grids".into()));
    }
    let mut jobs = Vec::new();
    for i in 0..instances.len() {
        if config.algorithm == Algorithm::Ignore {
            // theta plays no role
            jobs.push(Job { instance_index: i, config: AlgorithmConfig::ignore(config.solver), predictor: None });
            continue;
        }
        for &theta in &config.thetas {
            if !ssop {
                jobs.push(Job { instance_index: i, config: AlgorithmConfig::smartstart(theta, config.solver)?, predictor: None });
                continue;
            }
            for &lambda in config.lambdas.iter().filter(|&&l| l * theta > 1.0 && l <= 1.0) {
                for p in &config.predictors {
                    jobs.push(Job {
                        instance_index: i,
                        config: AlgorithmConfig::ssop(theta, lambda, config.solver)?,
                        predictor: Some(p),
                    });
                }
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs.max(1))
        .build()
        .map_err(|e| AnalysisError::Pool(e.to_string()))?;
    let opts: Vec<OptResult> =
        pool.install(|| instances.par_iter().map(|(_, inst)| optimum(inst)).collect::<Result<_, _>>())?;
    pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let (id, inst) = &instances[job.instance_index];
                let trace = simulate(inst, &job.config, job.predictor)?;
                let report = report_run(&trace, &opts[job.instance_index])?;
                Ok(SweepRow {
                    instance_id: id.clone(),
                    algorithm: job.config.algorithm,
                    theta: job.config.theta,
                    lambda: job.config.lambda,
                    predictor: job.predictor.map_or_else(|| "none".to_string(), |p| p.to_string()),
                    solver: job.config.solver,
                    n: inst.len(),
                    report,
                })
            })
            .collect()
    })
}

/// Worst ratio per (theta, lambda) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub theta: f64,
    pub lambda: f64,
    pub runs: usize,
    pub max_ratio: f64,
    pub run_bound: Option<f64>,
    pub violations: usize,
}

pub fn summarize(rows: &[SweepRow]) -> Vec<CellSummary> {
    let mut cells: Vec<CellSummary> = Vec::new();
    for r in rows {
        let cell = match cells.iter_mut().find(|c| c.theta == r.theta && c.lambda == r.lambda) {
            Some(c) => c,
            None => {
                cells.push(CellSummary {
                    theta: r.theta,
                    lambda: r.lambda,
                    runs: 0,
                    max_ratio: f64::NEG_INFINITY,
                    run_bound: r.report.run_bound,
                    violations: 0,
                });
                cells.last_mut().unwrap()
            }
        };
        cell.runs += 1;
        cell.max_ratio = cell.max_ratio.max(r.report.ratio);
        cell.violations += usize::from(r.report.violated || r.report.run_violated);
    }
    cells.sort_by(|a, b| a.theta.total_cmp(&b.theta).then(a.lambda.total_cmp(&b.lambda)));
    cells
}

/// Outcome of one lower-bound game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundReport {
    pub k: usize,
    pub epsilon: f64,
    pub algorithm: Algorithm,
    pub theta: f64,
    pub lambda: f64,
    pub predictor: Option<String>,
    pub t1: f64,
    pub t1_final: f64,
    pub case: AdversaryCase,
    pub analyzed: bool,
    pub alg_cost: f64,
    pub opt_cost: f64,
    pub ratio: f64,
    /// `2 - epsilon` when `t1` fell in an analyzed interval.
    pub asserted_bound: Option<f64>,
    pub holds: bool,
}

pub fn lower_bound_game(
    k: usize,
    config: &AlgorithmConfig,
    predictor: Option<&PredictorKind>,
) -> Result<LowerBoundReport, AnalysisError> {
    let run = simulate_adversary(k, config, predictor, true)?;
    let inst = run.instance.as_ref().expect("adversary run keeps its instance");
    let opt = optimum(inst)?;
    let eps = 1.0 / k as f64;
    let ratio = run.trace.completion_time / opt.completion_time;
    let analyzed = run.case.analyzed();
    let asserted_bound = analyzed.then_some(2.0 - eps);
    Ok(LowerBoundReport {
        k,
        epsilon: eps,
        algorithm: config.algorithm,
        theta: config.theta,
        lambda: config.lambda,
        predictor: predictor.map(|p| p.to_string()),
        t1: run.t1,
        t1_final: run.t1_final,
        case: run.case,
        analyzed,
        alg_cost: run.trace.completion_time,
        opt_cost: opt.completion_time,
        ratio,
        asserted_bound,
        holds: asserted_bound.is_none_or(|b| ratio >= b - CERT_TOL),
    })
}
