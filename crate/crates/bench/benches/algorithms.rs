use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use labelforge_bench::fixture;
use labelforge_core::active_learning::{rank_by_score, ScoredRecord, UncertaintyMethod};
use labelforge_core::classifier::{predict_proba, train, DEFAULT_L2_LAMBDA};
use labelforge_core::irr::{cohens_kappa, fleiss_kappa, AgreementTable, RatingsMatrix};
use labelforge_core::{RecordId, Vocabulary};

fn vectorize(c: &mut Criterion) {
    let mut group = c.benchmark_group("vectorize");
    for docs in [200, 1000] {
        let f = fixture(docs);
        group.bench_with_input(BenchmarkId::new("fit", docs), &f.texts, |b, texts| {
            b.iter(|| Vocabulary::fit(black_box(texts), 50_000).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("transform", docs), &f, |b, f| {
            b.iter(|| f.texts.iter().map(|t| f.vocabulary.transform(t)).count())
        });
    }
    group.finish();
}

fn training(c: &mut Criterion) {
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    for docs in [100, 400] {
        let f = fixture(docs);
        group.bench_with_input(BenchmarkId::from_parameter(docs), &f, |b, f| {
            b.iter(|| train(black_box(&f.xs), &f.ys, f.classes.clone(), DEFAULT_L2_LAMBDA).unwrap())
        });
    }
    group.finish();
}

fn scoring(c: &mut Criterion) {
    let f = fixture(1000);
    let model = train(&f.xs[..200], &f.ys[..200], f.classes.clone(), DEFAULT_L2_LAMBDA).unwrap();
    let ids: Vec<RecordId> = (0..f.xs.len()).map(|_| RecordId::new()).collect();
    c.bench_function("score_and_rank_1000", |b| {
        b.iter(|| {
            let scored = f
                .xs
                .iter()
                .enumerate()
                .map(|(i, x)| ScoredRecord {
                    record_id: ids[i],
                    upload_order: i,
                    score: UncertaintyMethod::Entropy
                        .score(&predict_proba(&model, x).unwrap())
                        .unwrap(),
                })
                .collect();
            rank_by_score(scored)
        })
    });
}

fn kappa(c: &mut Criterion) {
    let table = AgreementTable::new(vec![vec![20, 5], vec![10, 15]]).unwrap();
    c.bench_function("cohens_kappa_2x2", |b| b.iter(|| cohens_kappa(black_box(&table)).unwrap()));
    let rows: Vec<Vec<u64>> = (0..1000u64).map(|i| vec![i % 4, 3 - i % 4]).collect();
    let ratings = RatingsMatrix::new(rows, 3).unwrap();
    c.bench_function("fleiss_kappa_1000_items", |b| b.iter(|| fleiss_kappa(black_box(&ratings))));
}

criterion_group!(benches, vectorize, training, scoring, kappa);
criterion_main!(benches);
