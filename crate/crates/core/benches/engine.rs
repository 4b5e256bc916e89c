use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use polya_urn::engine::{run_with, Execution, Functional, SimConfig};
use polya_urn::sim::run_to;
use polya_urn::{RandomStream, UrnModel};

fn single_path(c: &mut Criterion) {
    let model = UrnModel::new(2, 1, 1, 2, 1, 1).unwrap();
    let horizon = 1_000_000;
    let mut group = c.benchmark_group("single_path");
    group.throughput(Throughput::Elements(horizon));
    group.bench_function("small_urn_1e6_steps", |b| {
        b.iter(|| run_to(&model, horizon, &mut RandomStream::new(1, 0)).unwrap())
    });
    group.finish();
}

fn replicates(c: &mut Criterion) {
    let model = UrnModel::new(4, 1, 1, 4, 1, 1).unwrap();
    let horizon = 10_000;
    let reps = 256;
    let mut group = c.benchmark_group("replicates");
    group.sample_size(20);
    group.throughput(Throughput::Elements(horizon * reps));
    for functional in [Functional::WEstimate, Functional::MartingalePath] {
        let cfg = SimConfig::new(model.clone(), horizon, reps, 7, functional);
        for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
            group.bench_with_input(BenchmarkId::new(format!("{functional:?}"), name), &cfg, |b, cfg| {
                b.iter(|| run_with(cfg, exec).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, single_path, replicates);
criterion_main!(benches);
