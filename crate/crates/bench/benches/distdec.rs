use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mktorus::protocol::{demo_workload, distributed_decrypt, distributed_decrypt_threaded, DistDecConfig};
use mktorus::NoiseParams;

fn distdec(c: &mut Criterion) {
    let mut g = c.benchmark_group("distdec_1000_bits");
    g.sample_size(10);
    for k in [2usize, 4, 8] {
        let w = demo_workload(560, k, 1000, NoiseParams::DEFAULT_ALPHA, k as u64).unwrap();
        let cfg = DistDecConfig::new(k as u64);
        g.bench_function(BenchmarkId::new("in_process", k), |b| {
            b.iter(|| distributed_decrypt(&w.cts, &w.keys, &cfg).unwrap())
        });
        g.bench_function(BenchmarkId::new("threaded", k), |b| {
            b.iter(|| distributed_decrypt_threaded(&w.cts, &w.keys, &cfg).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, distdec);
criterion_main!(benches);
