use approxbnb::experiment::{run_plan, ExperimentConfig, Plan};
use approxbnb::instance::ProblemKind;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn plan(kind: ProblemKind, pairs: Vec<(usize, usize)>, seeds: usize) -> Plan {
    let mut cfg = ExperimentConfig::new(kind, pairs);
    cfg.instances_per_pair = seeds;
    Plan::from_config(&cfg).expect("valid config")
}

fn sweeps(c: &mut Criterion) {
    let cases = [
        ("knapsack", plan(ProblemKind::Knapsack, vec![(8, 2), (10, 3)], 8)),
        ("unrelated", plan(ProblemKind::SchedulingUnrelated, vec![(6, 2), (8, 3)], 6)),
    ];
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    for (name, p) in &cases {
        group.bench_with_input(BenchmarkId::new("parallel", name), p, |b, p| {
            b.iter(|| run_plan(p, true).expect("sweep"))
        });
        group.bench_with_input(BenchmarkId::new("sequential", name), p, |b, p| {
            b.iter(|| run_plan(p, false).expect("sweep"))
        });
    }
    group.finish();
}

criterion_group!(benches, sweeps);
criterion_main!(benches);
