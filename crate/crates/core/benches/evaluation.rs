use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gwevo_core::datagen::{Benchmark, DatasetConfig, Split};
use gwevo_core::parallel::Execution;
use gwevo_core::pipelines::{elite_pipeline, seed_pipeline};
use gwevo_core::scoring::{evaluate_segments, FarRange};

fn bench_evaluation(c: &mut Criterion) {
    let cfg = DatasetConfig { segment_duration: 120.0, train_segments: 4, test_segments: 0, injections_per_segment: 2, ..Default::default() };
    let bench = Benchmark::synthetic(&cfg).unwrap();
    let segs = bench.split(Split::Train);
    for s in &segs {
        s.data().unwrap();
    }

    let mut group = c.benchmark_group("evaluate_segments");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        let label = format!("{exec:?}").to_lowercase();
        group.bench_with_input(BenchmarkId::new("seed", &label), &exec, |b, &exec| {
            b.iter(|| evaluate_segments(&segs, bench.d_max, FarRange::default(), exec, seed_pipeline).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("elite", &label), &exec, |b, &exec| {
            b.iter(|| evaluate_segments(&segs, bench.d_max, FarRange::default(), exec, elite_pipeline).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_evaluation);
criterion_main!(benches);
