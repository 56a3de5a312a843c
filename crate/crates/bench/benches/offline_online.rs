use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use lodwave::leapfrog::{leapfrog_run, RunOptions, TimeGrid};
use lodwave::build_corrector_set;
use lodwave_bench::Fixture;

fn offline(c: &mut Criterion) {
    let mut group = c.benchmark_group("offline_correctors");
    group.sample_size(10);
    for (coarse, layers) in [(2, 1), (3, 2)] {
        let fx = Fixture::new(coarse, 6, layers);
        group.bench_with_input(BenchmarkId::new(format!("H=2^-{coarse}"), layers), &fx, |b, fx| {
            b.iter(|| build_corrector_set(black_box(&fx.op), &fx.fine, fx.layers).unwrap())
        });
    }
    group.finish();
}

fn online(c: &mut Criterion) {
    let mut group = c.benchmark_group("online_leapfrog");
    for coarse in [2, 3] {
        let fx = Fixture::new(coarse, 6, 2);
        let (sys, u0, load) = fx.online();
        let v0 = vec![0.0; u0.len()];
        let grid = TimeGrid::with_steps(sys.cfl_limit(), 100).unwrap();
        let opts = RunOptions {
            enforce_cfl: true,
            stride: 100,
        };
        group.bench_function(BenchmarkId::new("100_steps", format!("H=2^-{coarse}")), |b| {
            b.iter(|| leapfrog_run(&sys, black_box(&u0), &v0, &load, &grid, &opts).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, offline, online);
criterion_main!(benches);
