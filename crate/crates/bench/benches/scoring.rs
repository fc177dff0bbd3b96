use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rir_bench::fixture;
use rir_core::dense::score_reviews;
use rir_core::fusion::{average_ef, rank_items_ef, rank_items_lf, FusionK};
use rir_core::sparse::{SparseIndex, SparseModel};

fn dense_late_fusion(c: &mut Criterion) {
    let data = fixture();
    let q: Vec<f32> = data.means[3].iter().map(|&x| x as f32).collect();
    let mut group = c.benchmark_group("dense_lf");
    for k in [
        FusionK::top(1).unwrap(),
        FusionK::top(10).unwrap(),
        FusionK::All,
    ] {
        group.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, &k| {
            b.iter(|| {
                let scores = score_reviews(&data.reviews, &q, &data.corpus).unwrap();
                rank_items_lf("q", black_box(&scores), k).unwrap()
            })
        });
    }
    group.finish();
}

fn dense_early_fusion(c: &mut Criterion) {
    let data = fixture();
    let table = average_ef(&data.reviews, &data.corpus).unwrap();
    let q: Vec<f32> = data.means[3].iter().map(|&x| x as f32).collect();
    c.bench_function("dense_ef", |b| {
        b.iter(|| rank_items_ef("q", black_box(&table), &q).unwrap())
    });
}

fn sparse(c: &mut Criterion) {
    let data = fixture();
    let index = SparseIndex::build(&data.corpus).unwrap();
    let mut group = c.benchmark_group("sparse_score_all");
    for model in [SparseModel::Bm25, SparseModel::Tfidf] {
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{model:?}")),
            &model,
            |b, &m| {
                b.iter(|| {
                    index
                        .score_reviews(
                            m,
                            black_box("spicy vegan noodles on the patio"),
                            &data.corpus,
                        )
                        .unwrap()
                })
            },
        );
    }
    group.finish();
    c.bench_function("sparse_build_index", |b| {
        b.iter(|| SparseIndex::build(black_box(&data.corpus)).unwrap())
    });
}

criterion_group!(benches, dense_late_fusion, dense_early_fusion, sparse);
criterion_main!(benches);
