use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use spiketrum::cross_correlate;
use spiketrum_bench::{bank, signal};

fn bench_cross_correlate(c: &mut Criterion) {
    let bank = bank();
    let mut group = c.benchmark_group("cross_correlate");
    for duration in [0.1, 1.0] {
        let x = signal(&bank, duration);
        let k = &bank.kernels()[0];
        group.bench_with_input(BenchmarkId::from_parameter(duration), &x, |b, x| {
            b.iter(|| cross_correlate(black_box(x), k).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_cross_correlate);
criterion_main!(benches);
