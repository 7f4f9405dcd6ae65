//! Discrete-event simulation of a schedule-based server.
//!
//! The server is idle at the origin, optionally predicts a gadget, waits
//! until the current route's start threshold, then works through the whole
//! route ignoring new arrivals. Start times are closed-form: a route of
//! length `L` may start at the first `t` with `t + L <= kappa * t`, i.e.
//! `t >= L / (kappa - 1)`, and the threshold is re-evaluated whenever a new
//! request arrives while waiting.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{AdaptiveAdversary, AdversaryCase, AdversaryError, Instance, Request};
use crate::predictor::{self, PredictionLog, PredictorError, PredictorKind};
use crate::schedule::{Planner, ScheduleError, ScheduleRoute, SolverKind};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("SSOP needs a predictor")]
    MissingPredictor,
    #[error("{0} takes no predictor")]
    UnexpectedPredictor(Algorithm),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Ignore,
    #[serde(rename = "smartstart")]
    SmartStart,
    Ssop,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Ignore => "ignore",
            Algorithm::SmartStart => "smartstart",
            Algorithm::Ssop => "ssop",
        })
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "ignore" => Ok(Algorithm::Ignore),
            "smartstart" => Ok(Algorithm::SmartStart),
            "ssop" => Ok(Algorithm::Ssop),
            other => Err(format!("unknown algorithm {other:?} (expected ignore|smartstart|ssop)")),
        }
    }
}

/// SSOP's per-schedule mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gadget {
    /// Threshold `lambda * theta`: start no earlier than SmartStart.
    Late,
    /// Threshold `theta / lambda`: start no later than SmartStart.
    Early,
}

impl Gadget {
    pub fn flip(self) -> Gadget {
        match self {
            Gadget::Late => Gadget::Early,
            Gadget::Early => Gadget::Late,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmConfig {
    pub algorithm: Algorithm,
    pub theta: f64,
    /// Confidence level; `1` for algorithms other than SSOP.
    pub lambda: f64,
    /// Approximation guarantee of the solver, if it has one.
    pub rho: Option<f64>,
    pub solver: SolverKind,
}

impl AlgorithmConfig {
    pub fn new(algorithm: Algorithm, theta: f64, lambda: f64, solver: SolverKind) -> Result<Self, EngineError> {
        let cfg = AlgorithmConfig { algorithm, theta, lambda, rho: solver.rho_guarantee(), solver };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn ignore(solver: SolverKind) -> Self {
        AlgorithmConfig { algorithm: Algorithm::Ignore, theta: f64::INFINITY, lambda: 1.0, rho: solver.rho_guarantee(), solver }
    }

    pub fn smartstart(theta: f64, solver: SolverKind) -> Result<Self, EngineError> {
        Self::new(Algorithm::SmartStart, theta, 1.0, solver)
    }

    pub fn ssop(theta: f64, lambda: f64, solver: SolverKind) -> Result<Self, EngineError> {
        Self::new(Algorithm::Ssop, theta, lambda, solver)
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.algorithm == Algorithm::Ignore {
            return Ok(());
        }
        let (theta, lambda) = (self.theta, self.lambda);
        if !(theta.is_finite() && theta > 1.0) {
            return Err(EngineError::Config(format!("theta must be a finite real > 1, got {theta}")));
        }
        if let Some(rho) = self.rho {
            if theta < rho {
                return Err(EngineError::Config(format!("theta = {theta} is below the solver guarantee rho = {rho}")));
            }
        }
        if self.algorithm == Algorithm::Ssop {
            if !(lambda.is_finite() && lambda * theta > 1.0 && lambda <= 1.0) {
                return Err(EngineError::Config(format!("lambda must lie in (1/theta, 1] = ({}, 1], got {lambda}", 1.0 / theta)));
            }
        } else if lambda != 1.0 {
            return Err(EngineError::Config(format!("lambda only applies to SSOP, got {lambda}")));
        }
        Ok(())
    }

    /// Start-threshold factor; `None` means start immediately.
    pub fn kappa(&self, gadget: Option<Gadget>) -> Option<f64> {
        match (self.algorithm, gadget) {
            (Algorithm::Ignore, _) => None,
            (Algorithm::SmartStart, _) | (Algorithm::Ssop, None) => Some(self.theta),
            (Algorithm::Ssop, Some(Gadget::Late)) => Some(self.lambda * self.theta),
            (Algorithm::Ssop, Some(Gadget::Early)) => Some(self.theta / self.lambda),
        }
    }
}

/// Earliest time at or after `now` at which SmartStart would start a route
/// of length `length`.
pub fn smartstart_reference_start(now: f64, length: f64, theta: f64) -> f64 {
    now.max(start_threshold(length, Some(theta)))
}

fn start_threshold(length: f64, kappa: Option<f64>) -> f64 {
    match kappa {
        None => 0.0,
        Some(k) => length / (k - 1.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRecord {
    pub route: ScheduleRoute,
    /// When the server became non-idle for this schedule.
    pub build_time: f64,
    pub gadget: Option<Gadget>,
    /// Start threshold `|R| / (kappa - 1)` of the executed route under the
    /// algorithm's own factor (`0` for Ignore).
    pub ssop_start: f64,
    /// Start threshold `|R| / (theta - 1)` SmartStart would use for the same
    /// route.
    pub smartstart_ref_start: f64,
    pub actual_start: f64,
    pub finish: f64,
    /// Sorted ids of the requests served.
    pub request_ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub config: AlgorithmConfig,
    pub schedules: Vec<ScheduleRecord>,
    pub completion_time: f64,
    /// `t_n`: release time of the last request.
    pub last_arrival: f64,
    /// `|t̂_f - t_n|` for the final schedule.
    pub eps_f: f64,
    pub server_working_at_tn: bool,
    pub prediction_log: Option<PredictionLog>,
}

impl Trace {
    pub fn final_schedule(&self) -> Option<&ScheduleRecord> {
        self.schedules.last()
    }

    pub fn penultimate_schedule(&self) -> Option<&ScheduleRecord> {
        self.schedules.len().checked_sub(2).map(|i| &self.schedules[i])
    }

    /// Same start/finish times, thresholds and routes, ignoring the config,
    /// gadget labels and prediction log.
    pub fn same_timeline(&self, other: &Trace) -> bool {
        self.completion_time == other.completion_time
            && self.schedules.len() == other.schedules.len()
            && self.schedules.iter().zip(&other.schedules).all(|(a, b)| {
                a.route == b.route
                    && a.build_time == b.build_time
                    && a.ssop_start == b.ssop_start
                    && a.smartstart_ref_start == b.smartstart_ref_start
                    && a.actual_start == b.actual_start
                    && a.finish == b.finish
                    && a.request_ids == b.request_ids
            })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

/// Runs the event loop. `choose(i)` supplies the gadget of schedule `i` for
/// SSOP; returning `None` aborts the run and yields `Ok(None)`.
pub(crate) fn run_core(
    instance: &Instance,
    config: &AlgorithmConfig,
    planner: &Planner,
    choose: &mut dyn FnMut(usize) -> Result<Option<Gadget>, EngineError>,
) -> Result<Option<Trace>, EngineError> {
    let reqs = instance.requests();
    let mut next = 0usize;
    let mut t = 0.0f64;
    let mut unserved: Vec<Request> = Vec::new();
    let mut schedules: Vec<ScheduleRecord> = Vec::new();

    let absorb = |t: f64, next: &mut usize, unserved: &mut Vec<Request>| {
        while *next < reqs.len() && reqs[*next].arrival <= t {
            unserved.push(reqs[*next]);
            *next += 1;
        }
    };

    loop {
        absorb(t, &mut next, &mut unserved);
        if unserved.is_empty() {
            if next == reqs.len() {
                break;
            }
            t = reqs[next].arrival;
            continue;
        }
        let build_time = t;
        let gadget = if config.algorithm == Algorithm::Ssop {
            match choose(schedules.len())? {
                Some(g) => Some(g),
                None => return Ok(None),
            }
        } else {
            None
        };
        let kappa = config.kappa(gadget);
        let (route, start) = loop {
            let route = planner.plan(&unserved)?;
            let start = t.max(start_threshold(route.length, kappa));
            if next < reqs.len() && reqs[next].arrival <= start {
                t = reqs[next].arrival;
                absorb(t, &mut next, &mut unserved);
                continue;
            }
            break (route, start);
        };
        let finish = start + route.length;
        let mut request_ids: Vec<usize> = unserved.iter().map(|r| r.id).collect();
        request_ids.sort_unstable();
        let smartstart_ref_start = if config.algorithm == Algorithm::Ignore {
            0.0
        } else {
            start_threshold(route.length, Some(config.theta))
        };
        schedules.push(ScheduleRecord {
            route: (*route).clone(),
            build_time,
            gadget,
            ssop_start: start_threshold(route.length, kappa),
            smartstart_ref_start,
            actual_start: start,
            finish,
            request_ids,
        });
        unserved.clear();
        t = finish;
    }

    let last_arrival = instance.last_arrival();
    let completion_time = schedules.last().map_or(0.0, |s| s.finish);
    let eps_f = schedules.last().map_or(0.0, |s| (s.ssop_start - last_arrival).abs());
    let server_working_at_tn =
        schedules.iter().any(|s| s.actual_start < last_arrival && last_arrival < s.finish);
    Ok(Some(Trace {
        config: *config,
        schedules,
        completion_time,
        last_arrival,
        eps_f,
        server_working_at_tn,
        prediction_log: None,
    }))
}

/// Simulates one run. `predictor` must be given exactly when the algorithm
/// is SSOP.
pub fn simulate(instance: &Instance, config: &AlgorithmConfig, predictor: Option<&PredictorKind>) -> Result<Trace, EngineError> {
    let planner = Planner::new(instance.space.clone(), instance.kind, config.solver);
    simulate_with(instance, Some(instance), config, predictor, &planner)
}

/// Simulation where lookahead predictors consult `lookahead` instead of the
/// instance actually played (which may be unknown in advance). `None` makes
/// lookahead predictors fail.
pub fn simulate_with(
    instance: &Instance,
    lookahead: Option<&Instance>,
    config: &AlgorithmConfig,
    predictor: Option<&PredictorKind>,
    planner: &Planner,
) -> Result<Trace, EngineError> {
    config.validate()?;
    match (config.algorithm, predictor) {
        (Algorithm::Ssop, None) => return Err(EngineError::MissingPredictor),
        (Algorithm::Ssop, Some(_)) | (_, None) => {}
        (alg, Some(_)) => return Err(EngineError::UnexpectedPredictor(alg)),
    }
    let Some(kind) = predictor else {
        return Ok(run_core(instance, config, planner, &mut |_| Ok(None))?.expect("no decisions requested"));
    };
    let mut session = predictor::Session::new(kind, lookahead, config, planner)?;
    let mut trace = run_core(instance, config, planner, &mut |i| session.decide(i).map(Some))?
        .expect("predictor always answers");
    trace.prediction_log = Some(session.into_log());
    Ok(trace)
}

/// Outcome of playing the adaptive lower-bound adversary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdversaryRun {
    pub k: usize,
    /// First-schedule start observed on the scripted prefix.
    pub t1: f64,
    /// First-schedule start in the completed game.
    pub t1_final: f64,
    pub case: AdversaryCase,
    pub trace: Trace,
    #[serde(skip)]
    pub instance: Option<Instance>,
}

/// Plays the adversary: the algorithm runs on the scripted prefix until its
/// first schedule starts at `t1`, the adversary answers with its final
/// request, and the run is replayed on the completed sequence. The algorithm
/// is deterministic, so the replay agrees with the first pass up to `t1`
/// whenever the answer is released after `t1`.
///
/// Lookahead predictors see only the scripted prefix when
/// `prefix_lookahead` is set; otherwise they are refused.
pub fn simulate_adversary(
    k: usize,
    config: &AlgorithmConfig,
    predictor: Option<&PredictorKind>,
    prefix_lookahead: bool,
) -> Result<AdversaryRun, EngineError> {
    let mut adv = AdaptiveAdversary::new(k)?;
    let prefix = adv.scripted_instance();
    let lookahead = prefix_lookahead.then_some(&prefix);
    let planner = Planner::new(prefix.space.clone(), prefix.kind, config.solver);
    let first = simulate_with(&prefix, lookahead, config, predictor, &planner)?;
    let t1 = first.schedules.first().map(|s| s.actual_start).expect("prefix is nonempty");
    let mut requests = Vec::with_capacity(k + 2);
    while let Some(r) = adv.adversary_next(None)? {
        requests.push(r);
    }
    let killer = adv.adversary_next(Some(t1))?.expect("adversary answers the observation");
    requests.push(killer);
    let full = Instance::new(prefix.space.clone(), prefix.kind, requests).expect("adversary requests are valid");
    let trace = simulate_with(&full, lookahead, config, predictor, &planner)?;
    let t1_final = trace.schedules[0].actual_start;
    Ok(AdversaryRun { k, t1, t1_final, case: adv.case().expect("finished"), trace, instance: Some(full) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::ProblemKind;
    use crate::metric::{MetricSpace, Point};

    fn single() -> Instance {
        let r = Request { id: 0, arrival: 0.0, pickup: Point::Line(1.0), dropoff: None };
        Instance::new(MetricSpace::Line, ProblemKind::Oltsp, vec![r]).unwrap()
    }

    #[test]
    fn smartstart_single_request() {
        let cfg = AlgorithmConfig::smartstart(2.0, SolverKind::Exact).unwrap();
        let tr = simulate(&single(), &cfg, None).unwrap();
        assert_eq!(tr.schedules.len(), 1);
        assert_eq!(tr.schedules[0].actual_start, 2.0);
        assert_eq!(tr.completion_time, 4.0);
    }

    #[test]
    fn ignore_single_request() {
        let tr = simulate(&single(), &AlgorithmConfig::ignore(SolverKind::Exact), None).unwrap();
        assert_eq!(tr.schedules[0].actual_start, 0.0);
        assert_eq!(tr.completion_time, 2.0);
    }

    #[test]
    fn empty_instance() {
        let inst = Instance::new(MetricSpace::Line, ProblemKind::Oltsp, vec![]).unwrap();
        let tr = simulate(&inst, &AlgorithmConfig::smartstart(2.0, SolverKind::Exact).unwrap(), None).unwrap();
        assert!(tr.schedules.is_empty());
        assert_eq!(tr.completion_time, 0.0);
    }

    #[test]
    fn reference_start() {
        let theta = 2.3028;
        assert!((smartstart_reference_start(0.0, 2.0, theta) - 2.0 / 1.3028).abs() < 1e-12);
        assert_eq!(smartstart_reference_start(3.0, 2.0, theta), 3.0);
    }

    #[test]
    fn config_validation() {
        assert!(AlgorithmConfig::smartstart(1.0, SolverKind::Exact).is_err());
        assert!(AlgorithmConfig::smartstart(1.4, SolverKind::Christofides).is_err());
        assert!(AlgorithmConfig::ssop(2.0, 0.5, SolverKind::Exact).is_err());
        assert!(AlgorithmConfig::ssop(2.0, 1.1, SolverKind::Exact).is_err());
        assert!(AlgorithmConfig::ssop(2.0, 0.51, SolverKind::Exact).is_ok());
    }

    #[test]
    fn predictor_presence_is_checked() {
        let ssop = AlgorithmConfig::ssop(2.0, 0.8, SolverKind::Exact).unwrap();
        assert!(matches!(simulate(&single(), &ssop, None), Err(EngineError::MissingPredictor)));
        let ss = AlgorithmConfig::smartstart(2.0, SolverKind::Exact).unwrap();
        assert!(matches!(
            simulate(&single(), &ss, Some(&PredictorKind::FixedLate)),
            Err(EngineError::UnexpectedPredictor(_))
        ));
    }

    #[test]
    fn arrival_at_start_joins_schedule() {
        // alone, request 0 would start at 2; request 1 arrives exactly then
        let rs = vec![
            Request { id: 0, arrival: 0.0, pickup: Point::Line(1.0), dropoff: None },
            Request { id: 1, arrival: 2.0, pickup: Point::Line(1.0), dropoff: None },
        ];
        let inst = Instance::new(MetricSpace::Line, ProblemKind::Oltsp, rs).unwrap();
        let tr = simulate(&inst, &AlgorithmConfig::smartstart(2.0, SolverKind::Exact).unwrap(), None).unwrap();
        assert_eq!(tr.schedules.len(), 1);
        assert_eq!(tr.schedules[0].request_ids, vec![0, 1]);
    }

    #[test]
    fn arrivals_while_working_are_deferred() {
        let rs = vec![
            Request { id: 0, arrival: 0.0, pickup: Point::Line(1.0), dropoff: None },
            Request { id: 1, arrival: 0.5, pickup: Point::Line(-1.0), dropoff: None },
        ];
        let inst = Instance::new(MetricSpace::Line, ProblemKind::Oltsp, rs).unwrap();
        let tr = simulate(&inst, &AlgorithmConfig::ignore(SolverKind::Exact), None).unwrap();
        assert_eq!(tr.schedules.len(), 2);
        assert_eq!(tr.schedules[1].actual_start, 2.0);
        assert_eq!(tr.completion_time, 4.0);
        assert!(tr.server_working_at_tn);
    }
}
