use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use mktorus::activation::act_circuit;
use mktorus::circuits::{mk_add, mk_enc_word, mk_mul};
use mktorus::{ActKind, Combiner, GateKind, Session};

fn sessions() -> Vec<(&'static str, Session)> {
    vec![("clear", Session::clear()), ("noisesim", Session::noise_sim(64, 2, 2f64.powi(-25), 1).unwrap())]
}

fn gates(c: &mut Criterion) {
    let mut g = c.benchmark_group("gate");
    for (name, s) in sessions() {
        let (a, b) = (s.encrypt(true), s.encrypt(false));
        g.bench_function(BenchmarkId::new("nand", name), |bench| {
            bench.iter(|| s.eval_gate(GateKind::Nand, black_box(&a), Some(black_box(&b))).unwrap())
        });
    }
    g.finish();
}

fn words(c: &mut Criterion) {
    let mut g = c.benchmark_group("word16");
    for (name, s) in sessions() {
        let (a, b) = (mk_enc_word(&s, -1234, 16).unwrap(), mk_enc_word(&s, 567, 16).unwrap());
        g.bench_function(BenchmarkId::new("add", name), |bench| bench.iter(|| mk_add(&s, &a, &b).unwrap()));
        g.bench_function(BenchmarkId::new("mul", name), |bench| bench.iter(|| mk_mul(&s, &a, &b).unwrap()));
    }
    g.finish();
}

fn activations(c: &mut Criterion) {
    let mut g = c.benchmark_group("activation16");
    g.sample_size(20);
    for (name, s) in sessions() {
        let x = mk_enc_word(&s, 9, 16).unwrap();
        for kind in [ActKind::G, ActKind::Taylor3, ActKind::Taylor7] {
            g.bench_function(BenchmarkId::new(kind.to_string(), name), |bench| {
                bench.iter(|| act_circuit(&s, kind, &x, 4, Combiner::Or).unwrap())
            });
        }
    }
    g.finish();
}

criterion_group!(benches, gates, words, activations);
criterion_main!(benches);
