use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use ecmkit::{saturation_sweep_with, utilization_curve, Execution, FixtureSet, SimdLevel};

fn sweeps(c: &mut Criterion) {
    let fx = FixtureSet::load_default().expect("fixtures");
    let kernels = fx.weighted_kernels().expect("kernel mix");
    let skx = fx.machine("skx").expect("skx").clone();
    let freqs: Vec<f64> = (0..200).map(|i| 1.0 + i as f64 * 0.0125).collect();

    let mut g = c.benchmark_group("saturation_sweep");
    for exec in [Execution::Sequential, Execution::Parallel] {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| {
                saturation_sweep_with(exec, black_box(&kernels), &skx, SimdLevel::Avx512, black_box(&freqs), 0.9)
                    .unwrap()
            })
        });
    }
    g.finish();

    let mut g = c.benchmark_group("utilization_curve");
    for exec in [Execution::Sequential, Execution::Parallel] {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| utilization_curve(exec, black_box(&kernels), &skx, SimdLevel::Avx).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, sweeps);
criterion_main!(benches);
