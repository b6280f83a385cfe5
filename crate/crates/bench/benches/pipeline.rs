use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use weaklab::classifier::featurize;
use weaklab::ngram::{extract_ngrams, MAX_N};
use weaklab::pipeline::{expand, pseudo_label, self_train_on, train_on_pseudo_labels};
use weaklab::self_training::soft_targets;
use weaklab::{BuiltinProvider, ExpansionConfig, SelfTrainConfig, TrainConfig};
use weaklab_bench::corpus;

fn ngrams(c: &mut Criterion) {
    let mut group = c.benchmark_group("extract_ngrams");
    for n in [300, 3000] {
        let data = corpus(n, 0);
        group.bench_with_input(BenchmarkId::from_parameter(n), &data, |b, d| {
            b.iter(|| extract_ngrams(black_box(&d.unlabelled), MAX_N).unwrap())
        });
    }
    group.finish();
}

fn stages(c: &mut Criterion) {
    let data = corpus(300, 0);
    let provider = BuiltinProvider::default();
    let vocab = expand(&data.unlabelled, &provider, &ExpansionConfig::default()).unwrap();
    let outcome = pseudo_label(&data.unlabelled, &vocab, None).unwrap();
    let model =
        train_on_pseudo_labels(&data.unlabelled, &outcome.labelled, &provider, &TrainConfig::default()).unwrap();

    c.bench_function("expand_300", |b| {
        b.iter(|| expand(&data.unlabelled, &provider, &ExpansionConfig::default()).unwrap())
    });
    c.bench_function("pseudo_label_300", |b| {
        b.iter(|| pseudo_label(&data.unlabelled, &vocab, None).unwrap())
    });
    c.bench_function("train_300", |b| {
        b.iter(|| {
            train_on_pseudo_labels(&data.unlabelled, &outcome.labelled, &provider, &TrainConfig::default())
                .unwrap()
        })
    });
    c.bench_function("selftrain_300", |b| {
        b.iter(|| self_train_on(model.clone(), &data.unlabelled, &provider, &SelfTrainConfig::default()).unwrap())
    });
    let features = featurize(data.unlabelled.documents(), &provider).unwrap();
    c.bench_function("featurize_300_cached", |b| {
        b.iter(|| featurize(black_box(data.unlabelled.documents()), &provider).unwrap())
    });
    let p: Vec<Vec<f64>> = features.iter().map(|h| vec![h[0].abs() + 0.1, h[1].abs() + 0.1, 0.5]).collect();
    c.bench_function("soft_targets_300x3", |b| b.iter(|| soft_targets(black_box(&p)).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = ngrams, stages
}
criterion_main!(benches);
