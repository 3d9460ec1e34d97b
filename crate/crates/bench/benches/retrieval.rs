use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use stylesearch_bench::{descriptor_sets, detections, queries, vectors};
use stylesearch_core::bovw::{train_codebook, KMeansConfig};
use stylesearch_core::detect::filter_detections;
use stylesearch_core::style_embed::{make_pairs, train_cbow};
use stylesearch_core::synth::synth_bundle;
use stylesearch_core::{CbowConfig, FilterConfig, ItemId, SynthSpec, VectorIndex};

fn knn(c: &mut Criterion) {
    let mut group = c.benchmark_group("knn");
    for n in [1_000, 10_000] {
        let index = VectorIndex::build(vectors(n, 256, 1)).unwrap();
        let qs = queries(16, 256, 2);
        group.bench_with_input(BenchmarkId::from_parameter(n), &index, |b, index| {
            b.iter(|| {
                for q in &qs {
                    black_box(index.knn(q, 6, None).unwrap());
                }
            })
        });
    }
    group.finish();
}

fn kmeans(c: &mut Criterion) {
    let sets = descriptor_sets(20, 100, 32, 3);
    let config = KMeansConfig {
        k: 64,
        seed: 4,
        ..KMeansConfig::default()
    };
    c.bench_function("kmeans 2000x32 k=64", |b| b.iter(|| black_box(train_codebook(&sets, &config).unwrap())));
}

fn cbow(c: &mut Criterion) {
    let bundle = synth_bundle(&SynthSpec::default(), 5).unwrap();
    let pairs = make_pairs(&bundle.corpus);
    let vocab: Vec<ItemId> = bundle.corpus.items.keys().cloned().collect();
    let config = CbowConfig {
        epochs: 20,
        ..CbowConfig::default()
    };
    c.bench_function("cbow 20 epochs", |b| b.iter(|| black_box(train_cbow(&pairs, &vocab, &config).unwrap())));
}

fn nms(c: &mut Criterion) {
    let dets = detections(200, 6);
    let config = FilterConfig::default();
    c.bench_function("nms 200 boxes", |b| b.iter(|| black_box(filter_detections(&dets, &config))));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = knn, kmeans, cbow, nms
}
criterion_main!(benches);
