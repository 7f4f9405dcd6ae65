use proptest::prelude::*;

use ssop_core::analysis::BoundSet;
use ssop_core::metric::validate_metric;
use ssop_core::instance::{generate_uniform, random_graph_metric};
use ssop_core::offline::{opt_bruteforce, opt_line, replay};
use ssop_core::predictor::count_mismatches;
use ssop_core::schedule::{route_length, solve_christofides, solve_exact, solve_nearest_neighbor, DEFAULT_MATCHING_CAP};
use ssop_core::{
    classify_and_certify, opt_dp, simulate, AlgorithmConfig, Instance, MetricSpace, Point, PredictorKind,
    ProblemKind, SolverKind, Trace,
};

fn space_for(tag: u8, seed: u64) -> MetricSpace {
    match tag % 3 {
        0 => MetricSpace::Line,
        1 => MetricSpace::Plane,
        _ => random_graph_metric(seed, 6),
    }
}

fn kind_for(tag: u8) -> ProblemKind {
    if tag.is_multiple_of(2) {
        ProblemKind::Oltsp
    } else {
        ProblemKind::Oldarp
    }
}

fn instance(seed: u64, n: usize, space: u8, kind: u8, horizon: f64) -> Instance {
    generate_uniform(seed, n, &space_for(space, seed), horizon, kind_for(kind)).unwrap()
}

fn predictors() -> Vec<PredictorKind> {
    vec![
        PredictorKind::OracleBest,
        PredictorKind::FixedLate,
        PredictorKind::FixedEarly,
        PredictorKind::RandomFlip { p: 0.5, seed: 1 },
        PredictorKind::AdversarialWorst,
    ]
}

fn assert_trace_invariants(inst: &Instance, tr: &Trace) {
    let mut seen: Vec<usize> = tr.schedules.iter().flat_map(|s| s.request_ids.iter().copied()).collect();
    seen.sort_unstable();
    let mut all: Vec<usize> = inst.requests().iter().map(|r| r.id).collect();
    all.sort_unstable();
    assert_eq!(seen, all, "every request is served exactly once");
    for w in tr.schedules.windows(2) {
        assert!(w[1].actual_start >= w[0].finish);
    }
    for s in &tr.schedules {
        assert!(s.actual_start >= s.build_time);
        assert!((s.finish - (s.actual_start + s.route.length)).abs() <= 1e-12 * s.finish.max(1.0));
        for id in &s.request_ids {
            let r = inst.requests().iter().find(|r| r.id == *id).unwrap();
            assert!(r.arrival <= s.actual_start);
        }
        if let Some(kappa) = tr.config.kappa(s.gadget) {
            if s.actual_start > s.build_time {
                assert!(s.actual_start + s.route.length <= kappa * s.actual_start * (1.0 + 1e-12));
            }
        }
    }
    assert_eq!(tr.completion_time, tr.schedules.last().map_or(0.0, |s| s.finish));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn line_and_plane_distances_are_metric(
        a in (-5.0f64..5.0, -5.0f64..5.0), b in (-5.0f64..5.0, -5.0f64..5.0), c in (-5.0f64..5.0, -5.0f64..5.0)
    ) {
        for (space, p, q, r) in [
            (MetricSpace::Line, Point::Line(a.0), Point::Line(b.0), Point::Line(c.0)),
            (MetricSpace::Plane, Point::Plane(a.0, a.1), Point::Plane(b.0, b.1), Point::Plane(c.0, c.1)),
        ] {
            let d = |x, y| space.distance(x, y).unwrap();
            prop_assert!(d(p, r) <= d(p, q) + d(q, r) + 1e-9);
            prop_assert_eq!(d(p, q), d(q, p));
            prop_assert_eq!(d(p, p), 0.0);
        }
    }

    #[test]
    fn graph_closures_validate(seed in any::<u64>(), nodes in 1usize..9) {
        let MetricSpace::Explicit(m) = random_graph_metric(seed, nodes) else { unreachable!() };
        prop_assert!(validate_metric(m.rows(), 0).is_ok());
    }

    #[test]
    fn reported_lengths_match_walks(seed in any::<u64>(), n in 0usize..8, space in 0u8..3, kind in 0u8..2) {
        let inst = instance(seed, n, space, kind, 1.0);
        let (s, r, k) = (&inst.space, inst.requests(), inst.kind);
        let mut routes = vec![solve_exact(s, r, k, 15).unwrap(), solve_nearest_neighbor(s, r, k)];
        if k == ProblemKind::Oltsp {
            routes.push(solve_christofides(s, r, k, DEFAULT_MATCHING_CAP).unwrap());
        }
        for route in routes {
            let walk = route_length(s, r, &route.order, k).unwrap();
            prop_assert!((walk - route.length).abs() <= 1e-9 * walk.max(1.0));
        }
    }

    #[test]
    fn exact_beats_heuristics(seed in any::<u64>(), n in 0usize..9, space in 0u8..3) {
        let inst = instance(seed, n, space, 0, 1.0);
        let (s, r, k) = (&inst.space, inst.requests(), inst.kind);
        let exact = solve_exact(s, r, k, 15).unwrap().length;
        let chr = solve_christofides(s, r, k, DEFAULT_MATCHING_CAP).unwrap().length;
        prop_assert!(chr <= 1.5 * exact + 1e-9);
        prop_assert!(solve_nearest_neighbor(s, r, k).length >= exact - 1e-9);
    }

    #[test]
    fn opt_dp_matches_brute_force(seed in any::<u64>(), n in 0usize..7, space in 0u8..3, kind in 0u8..2, horizon in 0.1f64..5.0) {
        let inst = instance(seed, n, space, kind, horizon);
        let dp = opt_dp(&inst).unwrap();
        let bf = opt_bruteforce(&inst).unwrap();
        prop_assert!((dp.completion_time - bf.completion_time).abs() <= 1e-9);
        let idx: Vec<usize> = dp.order.iter().map(|id| inst.requests().iter().position(|r| r.id == *id).unwrap()).collect();
        prop_assert!((replay(&inst.space, inst.kind, inst.requests(), &idx) - dp.completion_time).abs() <= 1e-9);
    }

    #[test]
    fn line_sweep_optimum_matches_dp(seed in any::<u64>(), n in 0usize..11, horizon in 0.1f64..5.0) {
        let inst = instance(seed, n, 0, 0, horizon);
        let dp = opt_dp(&inst).unwrap().completion_time;
        let line = opt_line(&inst).unwrap().completion_time;
        prop_assert!((dp - line).abs() <= 1e-9 * dp.max(1.0), "dp {} line {}", dp, line);
    }

    #[test]
    fn optimum_lower_bounds(seed in any::<u64>(), n in 1usize..8, space in 0u8..3, kind in 0u8..2) {
        let inst = instance(seed, n, space, kind, 3.0);
        let opt = opt_dp(&inst).unwrap().completion_time;
        let o = inst.space.origin();
        prop_assert!(opt >= inst.last_arrival() - 1e-12);
        let reach = inst.requests().iter().map(|r| inst.space.dist(o, r.pickup)).fold(0.0, f64::max);
        prop_assert!(opt >= 2.0 * reach - 1e-12);
        // an exact route over any subset is no longer than the optimum
        let half: Vec<_> = inst.requests().iter().copied().step_by(2).collect();
        prop_assert!(solve_exact(&inst.space, &half, inst.kind, 15).unwrap().length <= opt + 1e-9);
    }

    #[test]
    fn traces_are_consistent_and_deterministic(
        seed in any::<u64>(), n in 0usize..8, space in 0u8..3, kind in 0u8..2,
        theta in 1.2f64..3.5, lambda_frac in 0.01f64..1.0, pick in 0usize..5
    ) {
        let inst = instance(seed, n, space, kind, 2.0);
        let lambda = 1.0 / theta + (1.0 - 1.0 / theta) * lambda_frac;
        let p = &predictors()[pick];
        for (cfg, pred) in [
            (AlgorithmConfig::ignore(SolverKind::Exact), None),
            (AlgorithmConfig::smartstart(theta, SolverKind::Exact).unwrap(), None),
            (AlgorithmConfig::ssop(theta, lambda, SolverKind::Exact).unwrap(), Some(p)),
        ] {
            let a = simulate(&inst, &cfg, pred).unwrap();
            let b = simulate(&inst, &cfg, pred).unwrap();
            prop_assert_eq!(&a, &b);
            assert_trace_invariants(&inst, &a);
        }
    }

    #[test]
    fn lambda_one_reproduces_smartstart(seed in any::<u64>(), n in 0usize..8, space in 0u8..3, theta in 1.1f64..3.5, pick in 0usize..5) {
        let inst = instance(seed, n, space, 0, 2.0);
        let ss = simulate(&inst, &AlgorithmConfig::smartstart(theta, SolverKind::Exact).unwrap(), None).unwrap();
        let cfg = AlgorithmConfig::ssop(theta, 1.0, SolverKind::Exact).unwrap();
        let tr = simulate(&inst, &cfg, Some(&predictors()[pick])).unwrap();
        prop_assert!(tr.same_timeline(&ss));
        for s in &tr.schedules {
            prop_assert_eq!(s.ssop_start, s.smartstart_ref_start);
        }
    }

    #[test]
    fn oracle_brackets_every_predictor(seed in any::<u64>(), n in 1usize..8, space in 0u8..2, theta in 1.2f64..3.5, lambda_frac in 0.05f64..1.0) {
        let inst = instance(seed, n, space, 0, 2.0);
        let lambda = 1.0 / theta + (1.0 - 1.0 / theta) * lambda_frac;
        let cfg = AlgorithmConfig::ssop(theta, lambda, SolverKind::Exact).unwrap();
        let run = |p: &PredictorKind| simulate(&inst, &cfg, Some(p)).unwrap().completion_time;
        let best = run(&PredictorKind::OracleBest);
        let worst = run(&PredictorKind::AdversarialWorst);
        for p in predictors() {
            let c = run(&p);
            prop_assert!(best <= c + 1e-9 && c <= worst + 1e-9);
        }
    }

    #[test]
    fn flip_probability_zero_is_the_oracle(seed in any::<u64>(), n in 1usize..8, theta in 1.2f64..3.5, flip_seed in any::<u64>()) {
        let inst = instance(seed, n, 1, 0, 2.0);
        let cfg = AlgorithmConfig::ssop(theta, (1.0 + 1.0 / theta) / 2.0, SolverKind::Exact).unwrap();
        let oracle = simulate(&inst, &cfg, Some(&PredictorKind::OracleBest)).unwrap();
        let flip0 = simulate(&inst, &cfg, Some(&PredictorKind::RandomFlip { p: 0.0, seed: flip_seed })).unwrap();
        let flip1 = simulate(&inst, &cfg, Some(&PredictorKind::RandomFlip { p: 1.0, seed: flip_seed })).unwrap();
        let log0 = flip0.prediction_log.unwrap();
        prop_assert_eq!(log0.gadgets(), oracle.prediction_log.unwrap().gadgets());
        prop_assert_eq!(log0.mismatches_vs_oracle, 0);
        let log1 = flip1.prediction_log.unwrap();
        prop_assert_eq!(log1.mismatches_vs_oracle, log1.decisions.len());
    }

    #[test]
    fn mismatches_never_exceed_decisions(seed in any::<u64>(), n in 1usize..8, pick in 0usize..5) {
        let inst = instance(seed, n, 0, 0, 2.0);
        let cfg = AlgorithmConfig::ssop(2.0, 0.75, SolverKind::Exact).unwrap();
        let log = simulate(&inst, &cfg, Some(&predictors()[pick])).unwrap().prediction_log.unwrap();
        let oracle = log.oracle_decisions.clone().unwrap();
        prop_assert!(log.mismatches_vs_oracle <= log.decisions.len());
        prop_assert_eq!(log.mismatches_vs_oracle, count_mismatches(&log.gadgets(), &oracle));
    }

    #[test]
    fn runs_stay_within_whole_run_bounds(
        seed in any::<u64>(), n in 1usize..9, space in 0u8..3, kind in 0u8..2,
        theta in 1.1f64..3.5, lambda_frac in 0.05f64..1.0, pick in 0usize..5
    ) {
        let inst = instance(seed, n, space, kind, 2.0);
        let opt = opt_dp(&inst).unwrap();
        let lambda = 1.0 / theta + (1.0 - 1.0 / theta) * lambda_frac;
        let ss = simulate(&inst, &AlgorithmConfig::smartstart(theta, SolverKind::Exact).unwrap(), None).unwrap();
        let b = BoundSet::new(theta, 1.0, 1.0).unwrap();
        prop_assert!(ss.completion_time <= b.smartstart_ratio() * opt.completion_time + 1e-7);
        let cfg = AlgorithmConfig::ssop(theta, lambda, SolverKind::Exact).unwrap();
        let tr = simulate(&inst, &cfg, Some(&predictors()[pick])).unwrap();
        let report = classify_and_certify(&tr, &opt).unwrap();
        prop_assert!(!report.run_violated, "{:?}", report);
    }
}
