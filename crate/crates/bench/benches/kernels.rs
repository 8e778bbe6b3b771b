use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mmff_core::fusion::{FusionConfig, FusionParams, FusionSample};
use mmff_core::preprocess::{first_principal_component, midimax_select};
use mmff_core::tensor::Mode;
use mmff_core::{ModalityFeatures, ParamStore, RngStream};

fn midimax(c: &mut Criterion) {
    let mut rng = RngStream::new(1);
    let mut group = c.benchmark_group("midimax");
    for n in [1_000usize, 10_000, 100_000] {
        let series: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let ratio = (3 * n).div_ceil(600);
        group.bench_with_input(BenchmarkId::from_parameter(n), &series, |b, s| {
            b.iter(|| midimax_select(black_box(s), ratio).unwrap())
        });
    }
    group.finish();
}

fn pca(c: &mut Criterion) {
    let mut rng = RngStream::new(2);
    let mut group = c.benchmark_group("principal_axis");
    for dims in [16, 64] {
        // column c scaled by 1/(1+c): a well separated leading eigenvalue
        let data: Vec<f64> = (0..2_000 * dims).map(|i| rng.normal() / (1 + i % dims) as f64).collect();
        group.bench_with_input(BenchmarkId::from_parameter(dims), &data, |b, d| {
            b.iter(|| first_principal_component(black_box(d), dims).unwrap())
        });
    }
    group.finish();
}

fn fusion(c: &mut Criterion) {
    let mut rng = RngStream::new(3);
    let mut store = ParamStore::new();
    let fusion = FusionParams::new(&mut store, "fusion", FusionConfig::new(64, 16, 32, 32, 0.5), &mut rng).unwrap();
    let mut v = |n: usize| (0..n).map(|_| rng.normal()).collect::<Vec<f64>>();
    let sample = FusionSample {
        features: ModalityFeatures {
            id: "x".into(),
            text: v(64),
            audio: v(64),
            video: v(64),
        },
        z: v(16),
        target: 0.5,
    };
    c.bench_function("fusion_forward", |b| {
        b.iter(|| fusion.forward_values(&store, &sample.features, &sample.z).unwrap())
    });
    c.bench_function("fusion_forward_backward", |b| {
        let mut r = RngStream::new(4);
        b.iter(|| {
            let (mut g, loss, _) = fusion.sample_loss(&store, &sample, Mode::Train, &mut r).unwrap();
            g.backward(loss).unwrap();
            black_box(g.scalar(loss))
        })
    });
}

criterion_group!(benches, midimax, pca, fusion);
criterion_main!(benches);
