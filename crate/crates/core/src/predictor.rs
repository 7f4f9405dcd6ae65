//! Binary gadget predictors for SSOP.
//!
//! The lookahead oracle explores the decision tree over the remaining
//! schedules: each node is a prefix of gadget choices, its value the final
//! completion time when all later choices are also best (or worst). Each
//! prefix is simulated from scratch once and memoized; beyond
//! [`ORACLE_DEPTH_CAP`] further decisions the tree is cut off and each
//! branch is scored by a rollout that keeps its gadget fixed.

use std::collections::HashMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{run_core, AlgorithmConfig, EngineError, Gadget};
use crate::instance::Instance;
use crate::schedule::Planner;

pub const ORACLE_DEPTH_CAP: usize = 12;

/// Relative margin a branch must win by to beat the Late tie-break.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictorError {
    #[error("the lookahead oracle is undefined against an adaptive opponent: no full instance to look ahead on")]
    OracleUnavailable,
    #[error("flip probability must lie in [0, 1], got {0}")]
    BadProbability(f64),
    #[error("unknown predictor {0:?}")]
    Unknown(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictorKind {
    /// Branch-optimal lookahead: minimizes the final completion time.
    OracleBest,
    FixedLate,
    FixedEarly,
    /// The oracle's answer, flipped with probability `p`.
    RandomFlip { p: f64, seed: u64 },
    /// Branch-pessimal lookahead: maximizes the final completion time.
    AdversarialWorst,
    /// Replays a fixed decision vector, then answers Late.
    Scripted { gadgets: Vec<Gadget> },
}

impl PredictorKind {
    pub fn validate(&self) -> Result<(), PredictorError> {
        match self {
            PredictorKind::RandomFlip { p, .. } if !(0.0..=1.0).contains(p) => Err(PredictorError::BadProbability(*p)),
            _ => Ok(()),
        }
    }

    fn needs_oracle(&self) -> bool {
        matches!(self, PredictorKind::OracleBest | PredictorKind::AdversarialWorst | PredictorKind::RandomFlip { .. })
    }
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredictorKind::OracleBest => f.write_str("oracle_best"),
            PredictorKind::FixedLate => f.write_str("fixed_late"),
            PredictorKind::FixedEarly => f.write_str("fixed_early"),
            PredictorKind::RandomFlip { p, seed } => write!(f, "random_flip:{p}:{seed}"),
            PredictorKind::AdversarialWorst => f.write_str("adversarial_worst"),
            PredictorKind::Scripted { gadgets } => {
                f.write_str("scripted:")?;
                for g in gadgets {
                    f.write_str(if *g == Gadget::Late { "L" } else { "E" })?;
                }
                Ok(())
            }
        }
    }
}

impl std::str::FromStr for PredictorKind {
    type Err = PredictorError;

    /// Accepts the [`Display`](fmt::Display) forms; `random_flip` alone
    /// means `p = 0.5, seed = 0`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase().replace('-', "_");
        let mut parts = lower.split(':');
        let head = parts.next().unwrap_or_default();
        let kind = match head {
            "oracle" | "oracle_best" => PredictorKind::OracleBest,
            "late" | "fixed_late" => PredictorKind::FixedLate,
            "early" | "fixed_early" => PredictorKind::FixedEarly,
            "worst" | "adversarial_worst" => PredictorKind::AdversarialWorst,
            "random_flip" | "random" => {
                let bad = || PredictorError::Unknown(s.to_string());
                let p = parts.next().map_or(Ok(0.5), |v| v.parse().map_err(|_| bad()))?;
                let seed = parts.next().map_or(Ok(0), |v| v.parse().map_err(|_| bad()))?;
                PredictorKind::RandomFlip { p, seed }
            }
            "scripted" => {
                let gadgets = parts
                    .next()
                    .unwrap_or_default()
                    .chars()
                    .map(|c| match c {
                        'l' => Ok(Gadget::Late),
                        'e' => Ok(Gadget::Early),
                        _ => Err(PredictorError::Unknown(s.to_string())),
                    })
                    .collect::<Result<_, _>>()?;
                PredictorKind::Scripted { gadgets }
            }
            _ => return Err(PredictorError::Unknown(s.to_string())),
        };
        if parts.next().is_some() {
            return Err(PredictorError::Unknown(s.to_string()));
        }
        kind.validate()?;
        Ok(kind)
    }
}

/// Decisions of one run, with the oracle's answer at each decision point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionLog {
    pub decisions: Vec<(usize, Gadget)>,
    /// OracleBest's answer at each decision point of this run; absent when
    /// no lookahead instance was available.
    pub oracle_decisions: Option<Vec<Gadget>>,
    pub mismatches_vs_oracle: usize,
    /// Set when the oracle hit its depth cap and scored branches by rollout.
    pub oracle_fallback: bool,
}

impl PredictionLog {
    pub fn gadgets(&self) -> Vec<Gadget> {
        self.decisions.iter().map(|&(_, g)| g).collect()
    }
}

/// Hamming distance between two decision sequences aligned by schedule
/// index; surplus entries of the longer sequence count as mismatches.
pub fn count_mismatches(log: &[Gadget], oracle_log: &[Gadget]) -> usize {
    let common = log.iter().zip(oracle_log).filter(|(a, b)| a != b).count();
    common + log.len().abs_diff(oracle_log.len())
}

/// Memoized decision tree over one (instance, config).
pub struct DecisionTree<'a> {
    instance: &'a Instance,
    config: &'a AlgorithmConfig,
    planner: &'a Planner,
    /// `Some(completion)` if the run ends within the prefix.
    outcomes: HashMap<Vec<Gadget>, Option<f64>>,
    depth_cap: usize,
    pub fallback_used: bool,
}

impl<'a> DecisionTree<'a> {
    pub fn new(instance: &'a Instance, config: &'a AlgorithmConfig, planner: &'a Planner) -> Self {
        DecisionTree { instance, config, planner, outcomes: HashMap::new(), depth_cap: ORACLE_DEPTH_CAP, fallback_used: false }
    }

    pub fn with_depth_cap(mut self, cap: usize) -> Self {
        self.depth_cap = cap.max(1);
        self
    }

    fn outcome(&mut self, prefix: &[Gadget]) -> Result<Option<f64>, EngineError> {
        if let Some(&o) = self.outcomes.get(prefix) {
            return Ok(o);
        }
        let trace = run_core(self.instance, self.config, self.planner, &mut |i| Ok(prefix.get(i).copied()))?;
        let o = trace.map(|t| t.completion_time);
        self.outcomes.insert(prefix.to_vec(), o);
        Ok(o)
    }

    fn rollout(&mut self, prefix: &[Gadget], fill: Gadget) -> Result<f64, EngineError> {
        let trace = run_core(self.instance, self.config, self.planner, &mut |i| {
            Ok(Some(prefix.get(i).copied().unwrap_or(fill)))
        })?;
        Ok(trace.expect("rollout always answers").completion_time)
    }

    fn value(&mut self, prefix: &mut Vec<Gadget>, budget: usize, maximize: bool) -> Result<f64, EngineError> {
        if let Some(c) = self.outcome(prefix)? {
            return Ok(c);
        }
        let (late, early) = if budget == 0 {
            self.fallback_used = true;
            (self.rollout(prefix, Gadget::Late)?, self.rollout(prefix, Gadget::Early)?)
        } else {
            prefix.push(Gadget::Late);
            let late = self.value(prefix, budget - 1, maximize);
            prefix.pop();
            prefix.push(Gadget::Early);
            let early = self.value(prefix, budget - 1, maximize);
            prefix.pop();
            (late?, early?)
        };
        Ok(pick(late, early, maximize).1)
    }

    /// Best (or worst) gadget for the next decision after `prefix`, with the
    /// completion time it leads to.
    pub fn decide(&mut self, prefix: &[Gadget], maximize: bool) -> Result<(Gadget, f64), EngineError> {
        let mut p = prefix.to_vec();
        p.push(Gadget::Late);
        let late = self.value(&mut p, self.depth_cap - 1, maximize)?;
        *p.last_mut().unwrap() = Gadget::Early;
        let early = self.value(&mut p, self.depth_cap - 1, maximize)?;
        Ok(pick(late, early, maximize))
    }
}

fn pick(late: f64, early: f64, maximize: bool) -> (Gadget, f64) {
    let margin = TIE_TOL * late.abs().max(1.0);
    let early_wins = if maximize { early > late + margin } else { early < late - margin };
    if early_wins {
        (Gadget::Early, early)
    } else {
        (Gadget::Late, late)
    }
}

/// Per-run predictor state used by the engine.
pub(crate) struct Session<'a> {
    kind: &'a PredictorKind,
    tree: Option<DecisionTree<'a>>,
    rng: Option<ChaCha8Rng>,
    decisions: Vec<Gadget>,
    oracle: Vec<Gadget>,
}

impl<'a> Session<'a> {
    pub(crate) fn new(
        kind: &'a PredictorKind,
        lookahead: Option<&'a Instance>,
        config: &'a AlgorithmConfig,
        planner: &'a Planner,
    ) -> Result<Self, PredictorError> {
        kind.validate()?;
        if kind.needs_oracle() && lookahead.is_none() {
            return Err(PredictorError::OracleUnavailable);
        }
        let rng = match kind {
            PredictorKind::RandomFlip { seed, .. } => Some(ChaCha8Rng::seed_from_u64(*seed)),
            _ => None,
        };
        Ok(Session {
            kind,
            tree: lookahead.map(|inst| DecisionTree::new(inst, config, planner)),
            rng,
            decisions: Vec::new(),
            oracle: Vec::new(),
        })
    }

    pub(crate) fn decide(&mut self, index: usize) -> Result<Gadget, EngineError> {
        debug_assert_eq!(index, self.decisions.len());
        let oracle = match self.tree.as_mut() {
            Some(tree) => Some(tree.decide(&self.decisions, false)?.0),
            None => None,
        };
        let g = match self.kind {
            PredictorKind::FixedLate => Gadget::Late,
            PredictorKind::FixedEarly => Gadget::Early,
            PredictorKind::Scripted { gadgets } => gadgets.get(index).copied().unwrap_or(Gadget::Late),
            PredictorKind::OracleBest => oracle.expect("checked at construction"),
            PredictorKind::AdversarialWorst => {
                self.tree.as_mut().expect("checked at construction").decide(&self.decisions, true)?.0
            }
            PredictorKind::RandomFlip { p, .. } => {
                let base = oracle.expect("checked at construction");
                let u: f64 = self.rng.as_mut().expect("seeded").gen();
                if u < *p {
                    base.flip()
                } else {
                    base
                }
            }
        };
        if let Some(o) = oracle {
            self.oracle.push(o);
        }
        self.decisions.push(g);
        Ok(g)
    }

    pub(crate) fn into_log(self) -> PredictionLog {
        let oracle_fallback = self.tree.as_ref().is_some_and(|t| t.fallback_used);
        let has_oracle = self.tree.is_some();
        let mismatches = if has_oracle { count_mismatches(&self.decisions, &self.oracle) } else { 0 };
        PredictionLog {
            decisions: self.decisions.into_iter().enumerate().collect(),
            oracle_decisions: has_oracle.then_some(self.oracle),
            mismatches_vs_oracle: mismatches,
            oracle_fallback,
        }
    }
}
