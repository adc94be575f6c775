use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use eprop_core::eprop::{EpropConfig, FeedbackMatrix};
use eprop_core::tasks::SequenceSample;
use eprop_core::train::{sequence_gradients, Engine};
use eprop_core::{Dims, NetworkParams, Rng};

fn sample(rng: &mut Rng, len: usize) -> SequenceSample {
    SequenceSample {
        inputs: (0..len).map(|_| rng.uniform()).collect(),
        dim: 1,
        label: rng.below(10),
    }
}

fn engines(c: &mut Criterion) {
    let mut rng = Rng::new(7);
    let params = NetworkParams::init(&mut rng, Dims::new(1, 128, 10));
    let fb = FeedbackMatrix::Symmetric;
    let cfg = EpropConfig::default();
    let mut group = c.benchmark_group("sequence_gradients");
    group.sample_size(10);
    for len in [100, 784] {
        let s = sample(&mut rng, len);
        for engine in [Engine::EpropSymmetric, Engine::Bptt] {
            group.bench_with_input(BenchmarkId::new(engine.name(), len), &s, |b, s| {
                b.iter(|| sequence_gradients(engine, &params, &fb, &cfg, s).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, engines);
criterion_main!(benches);
