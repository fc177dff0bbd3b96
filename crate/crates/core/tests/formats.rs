mod common;

use std::fs;

use rir_core::dense::StoreKind;
use rir_core::fusion::{load_run, save_run};
use rir_core::sampling::write_tuples;
use rir_core::synth::{clustered, mean_queries, ClusterSpec};
use rir_core::*;

fn toy() -> synth::Clustered {
    clustered(ClusterSpec {
        n_items: 6,
        reviews_per_item: 5,
        dim: 8,
        ..ClusterSpec::default()
    })
    .unwrap()
}

#[test]
fn rire_file_layout() {
    let dir = tempfile::tempdir().unwrap();
    let store =
        EmbeddingStore::from_rows(StoreKind::Query, 2, [("q1", vec![1.5f32, -2.0])]).unwrap();
    let path = dir.path().join("q.rire");
    store.save(&path).unwrap();
    let bytes = fs::read(&path).unwrap();
    let mut want = b"RIRE".to_vec();
    want.extend(1u16.to_le_bytes());
    want.extend(2u32.to_le_bytes());
    want.extend(1u64.to_le_bytes());
    want.extend(2u16.to_le_bytes());
    want.extend(b"q1");
    want.extend(1.5f32.to_le_bytes());
    want.extend((-2.0f32).to_le_bytes());
    assert_eq!(bytes, want);

    let back = load_embeddings(&path, StoreKind::Query).unwrap();
    assert_eq!(back.get("q1").unwrap(), &[1.5, -2.0]);

    let mut extra = bytes.clone();
    extra.push(0);
    fs::write(&path, &extra).unwrap();
    assert!(load_embeddings(&path, StoreKind::Query).is_err());
    fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
    assert!(load_embeddings(&path, StoreKind::Query).is_err());
}

#[test]
fn synthetic_store_survives_disk() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy();
    let back = common::through_file(&data.reviews, dir.path(), "reviews.rire");
    assert_eq!(back.fingerprint(), data.reviews.fingerprint());
    let mut a = Vec::new();
    let mut b = Vec::new();
    data.reviews.write_to(&mut a).unwrap();
    back.write_to(&mut b).unwrap();
    assert_eq!(a, b);
}

#[test]
fn tuple_export_fields() {
    let data = toy();
    let config = SamplingConfig {
        negative_strategy: NegativeStrategy::IbHn,
        per_item_count: 2,
        batch_size: 4,
        ..SamplingConfig::default()
    };
    let set = build_tuple_set(&data.corpus, Some(&data.reviews), &config).unwrap();
    assert_eq!(set.n_tuples(), 12);
    let mut buf = Vec::new();
    write_tuples(&set.batches, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 12);
    for key in [
        "anchor",
        "positive",
        "hard_negatives",
        "item_id",
        "provenance",
        "seed",
        "batch_index",
    ] {
        assert!(lines.iter().all(|l| l.get(key).is_some()), "missing {key}");
    }
    assert_eq!(lines[0]["provenance"]["positive_strategy"], "SI");
    assert_eq!(lines[0]["provenance"]["negative_strategy"], "IB_HN");
    assert!(lines
        .iter()
        .all(|l| l["hard_negatives"].as_array().unwrap().len() == 1));
    let batch_sizes: Vec<usize> = set.batches.iter().map(TupleBatch::len).collect();
    assert_eq!(batch_sizes, vec![4, 4, 4]);
}

#[test]
fn run_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy();
    let (queries, qstore) = mean_queries(&data).unwrap();
    let table = average_ef(&data.reviews, &data.corpus).unwrap();
    let rankings = ef_inference(&table, &qstore, &queries).unwrap();
    let path = dir.path().join("run.jsonl");
    save_run(&rankings, &path).unwrap();
    let run = load_run(&path).unwrap();
    assert_eq!(run.len(), rankings.len());
    for (entry, ranking) in run.iter().zip(&rankings) {
        assert_eq!(entry.query_id, ranking.query_id);
        assert_eq!(entry.ranking, ranking.items);
    }
}

#[test]
fn dense_pipeline_scores_perfectly_on_separable_data() {
    let data = toy();
    let (queries, qstore) = mean_queries(&data).unwrap();
    let mut qrels = Qrels::new();
    for item in data.corpus.items() {
        qrels.add(&format!("q-{}", item.item_id), &item.item_id, true);
    }
    let to_run = |rankings: Vec<ItemRanking>| -> Vec<fusion::RunEntry> {
        rankings
            .into_iter()
            .map(|r| fusion::RunEntry {
                query_id: r.query_id,
                ranking: r.items,
            })
            .collect()
    };

    let table = average_ef(&data.reviews, &data.corpus).unwrap();
    let ef = evaluate_run(
        &to_run(ef_inference(&table, &qstore, &queries).unwrap()),
        &qrels,
    )
    .unwrap();
    assert_eq!(ef.map, 1.0);

    let lf: Vec<ItemRanking> = queries
        .iter()
        .map(|q| {
            let scores = dense::score_reviews(
                &data.reviews,
                qstore.get(&q.query_id).unwrap(),
                &data.corpus,
            )
            .unwrap();
            rank_items_lf(&q.query_id, &scores, FusionK::All).unwrap()
        })
        .collect();
    let lf = evaluate_run(&to_run(lf), &qrels).unwrap();
    assert_eq!(lf.r_prec, 1.0);

    let report = aggregate(&[ef.clone(), ef]).unwrap();
    assert_eq!(report.map.half_width, Some(0.0));
}

#[test]
fn sparse_index_persists() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy();
    let index = SparseIndex::build(&data.corpus).unwrap();
    let path = dir.path().join("index.json");
    index.save(&path).unwrap();
    let back = SparseIndex::load(&path).unwrap();
    assert_eq!(back, index);
    let a = index
        .score_reviews(SparseModel::Bm25, "spicy noodles", &data.corpus)
        .unwrap();
    let b = back
        .score_reviews(SparseModel::Bm25, "spicy noodles", &data.corpus)
        .unwrap();
    assert_eq!(a, b);
}

#[test]
fn cefr_outputs_load_back() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy();
    let config = TrainConfig {
        batch_size: 6,
        epochs: 3,
        early_stopping: None,
        ..TrainConfig::default()
    };
    let out = cefr_train(&data.corpus, &data.reviews, &config, None).unwrap();
    let path = dir.path().join("items.rire");
    out.table.to_store().unwrap().save(&path).unwrap();
    let store = load_embeddings(&path, StoreKind::Item).unwrap();
    let table = ItemEmbeddingTable::from_store(&store, &data.corpus).unwrap();
    assert_eq!(table.ids(), out.table.ids());

    let mut trace = Vec::new();
    cefr::write_loss_trace(&out.trace, &mut trace).unwrap();
    let lines: Vec<serde_json::Value> = std::str::from_utf8(&trace)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0]["epoch"], 1);
    assert!(lines[2]["mean_loss"].as_f64().unwrap() > 0.0);
}
