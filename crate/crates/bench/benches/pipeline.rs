use std::collections::HashMap;

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use relrag_core::dataset::{KnownDataset, RelationSchema};
use relrag_core::eval::{score, ScoringMode};
use relrag_core::normalize::{normalize_output, LabelMatcher, NormalizationPolicy, PredictionRecord};
use relrag_core::retrieval::{EmbeddingProvider, EmbeddingStore, HashingProvider};

fn random_store(rng: &mut ChaCha8Rng, size: usize, dim: usize) -> EmbeddingStore {
    let mut store = EmbeddingStore::new(dim, "bench").unwrap();
    for i in 0..size {
        let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        store.insert(&format!("t{i:06}"), &v).unwrap();
    }
    store
}

fn top_k(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut group = c.benchmark_group("query_top_k");
    // sentence-t5-base width; sizes span SemEval to TACRED training splits
    for size in [8_000, 68_124] {
        let store = random_store(&mut rng, size, 768);
        let query: Vec<f32> = (0..768).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        group.bench_with_input(BenchmarkId::new("d768_k1", size), &store, |b, s| {
            b.iter(|| s.query_top_k("q", black_box(&query), 1).unwrap())
        });
    }
    group.finish();
}

fn hashing_embedder(c: &mut Criterion) {
    let sentence = "Bill Gates founded Microsoft together with Paul Allen in Albuquerque in 1975 .";
    c.bench_function("hashing_embed_sentence", |b| b.iter(|| HashingProvider.embed_once(black_box(sentence)).unwrap()));
}

fn normalization(c: &mut Criterion) {
    let tacred = RelationSchema::builtin(KnownDataset::Tacred).unwrap();
    let semeval = RelationSchema::builtin(KnownDataset::SemEval).unwrap();
    let outputs =
        ["per:employee_of", "The relation is org:top_members/employees.", "PER : CITY OF BIRTH", "i am not sure"];
    let mut group = c.benchmark_group("normalize");
    group.bench_function("tacred_cascade_uncached", |b| {
        b.iter(|| {
            for o in outputs {
                black_box(normalize_output(o, &tacred, NormalizationPolicy::ContainmentCascade));
            }
        })
    });
    let matcher = LabelMatcher::new(&tacred, NormalizationPolicy::ContainmentCascade);
    group.bench_function("tacred_cascade_matcher", |b| {
        b.iter(|| {
            for o in outputs {
                black_box(matcher.normalize(o));
            }
        })
    });
    let semeval_matcher = LabelMatcher::new(&semeval, NormalizationPolicy::ContainmentCascade);
    group.bench_function("semeval_directional", |b| {
        b.iter(|| black_box(semeval_matcher.normalize("Cause-Effect (e2, e1)")))
    });
    group.finish();
}

fn scoring(c: &mut Criterion) {
    let schema = RelationSchema::builtin(KnownDataset::Tacred).unwrap();
    let labels = schema.labels().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 15_509;
    let golds: HashMap<String, String> =
        (0..n).map(|i| (format!("i{i}"), labels[rng.random_range(0..labels.len())].clone())).collect();
    let matcher = LabelMatcher::new(&schema, NormalizationPolicy::Exact);
    let preds: Vec<PredictionRecord> = (0..n)
        .map(|i| {
            let label = &labels[rng.random_range(0..labels.len())];
            PredictionRecord::new(format!("i{i}"), "h", label.clone(), matcher.normalize(label))
        })
        .collect();
    c.bench_function("score_tacred_test_positive_class", |b| {
        b.iter(|| score(black_box(&preds), &golds, &schema, ScoringMode::PositiveClass).unwrap())
    });
}

criterion_group!(benches, top_k, hashing_embedder, normalization, scoring);
criterion_main!(benches);
