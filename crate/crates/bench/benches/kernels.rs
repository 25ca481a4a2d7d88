use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ctxprobe_core::analytics::ternary_heatmap;
use ctxprobe_core::calibration::{fit_temperature, DEFAULT_BOUNDS};
use ctxprobe_core::ngram::{featurize, train, NgramHyperparams};
use ctxprobe_core::probe::cohen_kappa;
use ctxprobe_core::{InputView, Label, PredictionRecord, Task};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: &[&str] = &[
    "a", "man", "woman", "is", "sitting", "on", "the", "bench", "outside", "dog", "runs", "through", "park", "nobody",
    "sleeping", "tall", "near", "water", "two", "people",
];

fn sentences(n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    (0..n)
        .map(|_| {
            let len = rng.gen_range(5..15);
            (0..len).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
        })
        .collect()
}

fn bench_ngram(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let texts = sentences(1000, &mut rng);
    c.bench_function("featurize 1000 sentences", |b| {
        b.iter(|| texts.iter().map(|t| featurize(black_box(t), 4, 2_000_000).len()).sum::<usize>())
    });

    let labels = Task::Nli.labels();
    let corpus: Vec<(String, Label)> = texts.iter().map(|t| (t.clone(), labels[rng.gen_range(0..3)])).collect();
    let hp = NgramHyperparams {
        epochs: 2,
        bucket_count: 200_000,
        ..NgramHyperparams::default()
    };
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("1000 sentences x 2 epochs", |b| b.iter(|| train(black_box(&corpus), &hp).unwrap()));
    group.finish();
}

fn bench_kappa(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let labels = Task::Nli.labels();
    let pairs: Vec<_> = (0..10_000).map(|_| (labels[rng.gen_range(0..3)], labels[rng.gen_range(0..3)])).collect();
    c.bench_function("kappa 10000 pairs", |b| b.iter(|| cohen_kappa(black_box(&pairs)).unwrap()));
}

fn bench_calibration(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let labels = Task::Nli.labels();
    let records: Vec<PredictionRecord> = (0..10_000)
        .map(|i| PredictionRecord {
            instance_id: format!("r{i}"),
            model_id: "m".into(),
            view: InputView::Full,
            logits: (0..3).map(|_| rng.gen_range(-4.0..4.0)).collect(),
            gold: labels[rng.gen_range(0..3)],
        })
        .collect();
    c.bench_function("fit temperature 10000 records", |b| {
        b.iter(|| fit_temperature(black_box(&records), DEFAULT_BOUNDS).unwrap())
    });
}

fn bench_ternary(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let points: Vec<[f64; 3]> = (0..10_000)
        .map(|_| {
            let (a, b): (f64, f64) = (rng.gen(), rng.gen());
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            [lo, hi - lo, 1.0 - hi]
        })
        .collect();
    c.bench_function("ternary 10000 points r=30 sigma=1.5", |b| {
        b.iter(|| ternary_heatmap(black_box(&points), 30, 1.5).unwrap())
    });
}

criterion_group!(benches, bench_ngram, bench_kappa, bench_calibration, bench_ternary);
criterion_main!(benches);
