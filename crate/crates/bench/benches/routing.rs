use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use ssop_core::instance::generate_uniform;
use ssop_core::offline::opt_line;
use ssop_core::schedule::{solve_christofides, solve_exact, DEFAULT_EXACT_CAP, DEFAULT_MATCHING_CAP};
use ssop_core::{opt_dp, simulate, AlgorithmConfig, Instance, MetricSpace, PredictorKind, ProblemKind, SolverKind};

fn plane(seed: u64, n: usize) -> Instance {
    generate_uniform(seed, n, &MetricSpace::Plane, 4.0, ProblemKind::Oltsp).unwrap()
}

fn solvers(c: &mut Criterion) {
    let mut g = c.benchmark_group("solver");
    for n in [6, 10, 13] {
        let inst = plane(n as u64, n);
        g.bench_with_input(BenchmarkId::new("exact", n), &inst, |b, i| {
            b.iter(|| solve_exact(&i.space, black_box(i.requests()), i.kind, DEFAULT_EXACT_CAP).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("christofides", n), &inst, |b, i| {
            b.iter(|| solve_christofides(&i.space, black_box(i.requests()), i.kind, DEFAULT_MATCHING_CAP).unwrap())
        });
    }
    g.finish();
}

fn engine(c: &mut Criterion) {
    let mut g = c.benchmark_group("simulate");
    let inst = plane(7, 10);
    let cfg = AlgorithmConfig::ssop(2.0, 0.8, SolverKind::Exact).unwrap();
    for p in [PredictorKind::FixedLate, PredictorKind::OracleBest] {
        g.bench_with_input(BenchmarkId::new("ssop", p.to_string()), &p, |b, p| {
            b.iter(|| simulate(black_box(&inst), &cfg, Some(p)).unwrap())
        });
    }
    let ss = AlgorithmConfig::smartstart(2.0, SolverKind::Christofides).unwrap();
    g.bench_function("smartstart_christofides", |b| b.iter(|| simulate(black_box(&inst), &ss, None).unwrap()));
    g.finish();
}

fn offline(c: &mut Criterion) {
    let mut g = c.benchmark_group("offline");
    for n in [8, 12] {
        let inst = plane(100 + n as u64, n);
        g.bench_with_input(BenchmarkId::new("opt_dp", n), &inst, |b, i| b.iter(|| opt_dp(black_box(i)).unwrap()));
    }
    for n in [50, 200] {
        let inst = generate_uniform(n as u64, n, &MetricSpace::Line, 8.0, ProblemKind::Oltsp).unwrap();
        g.bench_with_input(BenchmarkId::new("opt_line", n), &inst, |b, i| b.iter(|| opt_line(black_box(i)).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, solvers, engine, offline);
criterion_main!(benches);
