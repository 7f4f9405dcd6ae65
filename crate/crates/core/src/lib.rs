//! Online routing laboratory.
//!
//! Simulates a unit-speed server answering requests that appear over time
//! (online TSP and online dial-a-ride) under the schedule-based algorithms
//! Ignore, SmartStart and SSOP (SmartStart with a binary per-schedule
//! prediction), computes offline optima, and checks every run against the
//! closed-form competitive bounds of those algorithms.
//!
//! Module map:
//!
//! * [`metric`]: line, plane and explicit-matrix metric spaces.
//! * [`instance`]: requests, instances, random generators, JSON files and the
//!   adaptive lower-bound adversary.
//! * [`schedule`]: origin-rooted closed routes over a released request set
//!   (exact subset DP, Christofides, nearest neighbour).
//! * [`offline`]: the offline optimum with release times.
//! * [`engine`]: the event-driven server simulator producing a [`Trace`].
//! * [`predictor`]: binary gadget predictors, including the lookahead oracle.
//! * [`analysis`]: bound formulas, case classification, certification and
//!   parameter sweeps.

pub mod analysis;
pub mod engine;
pub mod instance;
pub mod metric;
pub mod offline;
pub mod predictor;
pub mod schedule;

pub use analysis::{
    classify_and_certify, smartstart_bound, ssop_bounds, BoundSet, CaseLabel, RunReport,
    SweepConfig, SweepRow,
};
pub use engine::{simulate, Algorithm, AlgorithmConfig, Gadget, ScheduleRecord, Trace};
pub use instance::{AdaptiveAdversary, Instance, ProblemKind, Request};
pub use metric::{MetricSpace, Point};
pub use offline::{opt_bruteforce, opt_dp, optimum, OptResult};
pub use predictor::{PredictionLog, PredictorKind};
pub use schedule::{Planner, ScheduleRoute, SolverKind};

/// Absolute tolerance applied when certifying costs against bounds.
pub const CERT_TOL: f64 = 1e-7;
