use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use spiketrum::{stream_encode, StreamConfig};
use spiketrum_bench::{bank, signal};

fn bench_stream(c: &mut Criterion) {
    let bank = bank();
    let x = signal(&bank, 1.0);
    let cfg = StreamConfig::default();
    let mut group = c.benchmark_group("stream");
    group.sample_size(10);
    group.bench_function("lookahead", |b| {
        b.iter(|| stream_encode(black_box(&x), &bank, &cfg).unwrap())
    });
    let strict = StreamConfig {
        lookahead: false,
        ..cfg.clone()
    };
    group.bench_function("strict", |b| {
        b.iter(|| stream_encode(black_box(&x), &bank, &strict).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_stream);
criterion_main!(benches);
