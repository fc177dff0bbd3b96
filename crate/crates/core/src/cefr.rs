//! Contrastive early fusion: item vectors learned as free anchors of the
//! n-pair loss against frozen review embeddings, starting from Average EF.

use std::collections::HashMap;
use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::contrastive::InBatch;
use crate::corpus::{Corpus, Query};
use crate::dense::{EmbeddingStore, StoreKind};
use crate::error::{Error, Result};
use crate::fusion::{average_ef, rank_items_ef, ItemRanking};
use crate::rng::stream;
use crate::sampling::pack_batches;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InitSource {
    AverageEf,
    File,
}

/// One learnable f64 vector per item, in corpus order.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemEmbeddingTable {
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
    init_source: InitSource,
}

impl ItemEmbeddingTable {
    pub fn from_rows(
        dim: usize,
        rows: Vec<(String, Vec<f64>)>,
        init_source: InitSource,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Format("dimension 0".into()));
        }
        let mut table = ItemEmbeddingTable {
            dim,
            ids: Vec::with_capacity(rows.len()),
            index: HashMap::with_capacity(rows.len()),
            data: Vec::with_capacity(rows.len() * dim),
            init_source,
        };
        for (id, v) in rows {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: v.len(),
                });
            }
            if table.index.insert(id.clone(), table.ids.len()).is_some() {
                return Err(Error::Format(format!("duplicate item {id:?}")));
            }
            table.ids.push(id);
            table.data.extend(v);
        }
        Ok(table)
    }

    /// Reads an item store, requiring exactly one vector per corpus item.
    pub fn from_store(store: &EmbeddingStore, corpus: &Corpus) -> Result<Self> {
        if store.len() != corpus.n_items() {
            return Err(Error::Config(format!(
                "item table has {} vectors for {} items",
                store.len(),
                corpus.n_items()
            )));
        }
        let rows = corpus
            .items()
            .iter()
            .map(|item| {
                let v = store.require(&item.item_id)?;
                Ok((item.item_id.clone(), v.iter().map(|&x| x as f64).collect()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(store.dim(), rows, InitSource::File)
    }

    pub fn to_store(&self) -> Result<EmbeddingStore> {
        EmbeddingStore::from_rows(
            StoreKind::Item,
            self.dim,
            self.iter()
                .map(|(id, v)| (id.to_string(), v.iter().map(|&x| x as f32).collect())),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn init_source(&self) -> InitSource {
        self.init_source
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, item_id: &str) -> Option<&[f64]> {
        self.index
            .get(item_id)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn get_mut(&mut self, item_id: &str) -> Option<&mut [f64]> {
        let dim = self.dim;
        self.index
            .get(item_id)
            .map(|&i| &mut self.data[i * dim..(i + 1) * dim])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.ids
            .iter()
            .zip(self.data.chunks_exact(self.dim))
            .map(|(id, v)| (id.as_str(), v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for one parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, cfg: &AdamConfig) {
        debug_assert_eq!(params.len(), grad.len());
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EarlyStopping {
    pub patience: usize,
    pub min_delta: f64,
}

impl Default for EarlyStopping {
    fn default() -> Self {
        EarlyStopping {
            patience: 5,
            min_delta: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Positives drawn per item per epoch, fresh each epoch.
    pub per_item_count: usize,
    /// `false` in config files disables early stopping, `true` uses the defaults.
    #[serde(with = "early_stopping_serde")]
    pub early_stopping: Option<EarlyStopping>,
}

mod early_stopping_serde {
    use super::EarlyStopping;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Switch(bool),
        Rule(EarlyStopping),
    }

    pub fn serialize<S: Serializer>(v: &Option<EarlyStopping>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(rule) => Repr::Rule(*rule),
            None => Repr::Switch(false),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<EarlyStopping>, D::Error> {
        Ok(match Repr::deserialize(d)? {
            Repr::Switch(true) => Some(EarlyStopping::default()),
            Repr::Switch(false) => None,
            Repr::Rule(rule) => Some(rule),
        })
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            batch_size: 48,
            epochs: 100,
            seed: 0,
            adam: AdamConfig::default(),
            per_item_count: 1,
            early_stopping: Some(EarlyStopping::default()),
        }
    }
}

impl TrainConfig {
    fn validate(&self, n_items: usize) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(
                "learning rate must be finite and non-negative".into(),
            ));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be at least 2".into()));
        }
        if self.batch_size > n_items {
            return Err(Error::InfeasibleBatch {
                batch_size: self.batch_size,
                available: n_items,
            });
        }
        if self.per_item_count == 0 {
            return Err(Error::Config("per_item_count must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub mean_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub table: ItemEmbeddingTable,
    pub trace: Vec<EpochLoss>,
    pub stopped_early: bool,
}

/// One epoch's batches: each entry is `(item index, positive review id)`.
fn epoch_batches<'c>(
    corpus: &'c Corpus,
    config: &TrainConfig,
    epoch: usize,
) -> Result<Vec<Vec<(usize, &'c str)>>> {
    let mut rng = stream(config.seed, &format!("cefr/epoch/{epoch}"));
    let per_item: Vec<Vec<(usize, &str)>> = corpus
        .items()
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let mut order: Vec<&str> = item.reviews.iter().map(|r| r.review_id.as_str()).collect();
            order.shuffle(&mut rng);
            (0..config.per_item_count)
                .map(|n| (i, order[n % order.len()]))
                .collect()
        })
        .collect();
    let mut batches = pack_batches(per_item, config.batch_size, &mut rng)?;
    // A lone tuple has no in-batch negatives.
    batches.retain(|b| b.len() >= 2);
    Ok(batches)
}

/// Mini-batch Adam on item vectors with in-batch negatives; review vectors stay frozen.
///
/// Each item's Adam state advances only when the item is in a batch.
pub fn cefr_train(
    corpus: &Corpus,
    store: &EmbeddingStore,
    config: &TrainConfig,
    init: Option<ItemEmbeddingTable>,
) -> Result<TrainOutcome> {
    config.validate(corpus.n_items())?;
    let mut table = match init {
        Some(t) => t,
        None => average_ef(store, corpus)?,
    };
    if table.dim() != store.dim() {
        return Err(Error::DimensionMismatch {
            expected: store.dim(),
            actual: table.dim(),
        });
    }
    for item in corpus.items() {
        if table.get(&item.item_id).is_none() {
            return Err(Error::UnknownItem(item.item_id.clone()));
        }
        for r in &item.reviews {
            store.require(&r.review_id)?;
        }
    }

    let review_vec = |id: &str| -> Vec<f64> {
        store
            .get(id)
            .expect("checked above")
            .iter()
            .map(|&x| x as f64)
            .collect()
    };
    let mut states: Vec<AdamState> = (0..corpus.n_items())
        .map(|_| AdamState::new(table.dim()))
        .collect();
    let mut trace = Vec::new();
    let mut best = f64::INFINITY;
    let mut wait = 0;
    let mut stopped_early = false;

    for epoch in 1..=config.epochs {
        let batches = epoch_batches(corpus, config, epoch)?;
        let mut total = 0.0;
        let mut count = 0usize;
        for (b, batch) in batches.iter().enumerate() {
            let item_ids: Vec<&str> = batch
                .iter()
                .map(|&(i, _)| corpus.items()[i].item_id.as_str())
                .collect();
            let anchors: Vec<Vec<f64>> = item_ids
                .iter()
                .map(|id| table.get(id).expect("checked above").to_vec())
                .collect();
            let positives: Vec<Vec<f64>> = batch.iter().map(|&(_, r)| review_vec(r)).collect();
            let (loss, grads) = InBatch {
                anchors: &anchors,
                positives: &positives,
                hard_negatives: &[],
            }
            .loss_and_anchor_grads()
            .map_err(|e| match e {
                Error::NonFinite(what) => Error::NonFinite(format!(
                    "{what} at epoch {epoch}, batch {b} (items {item_ids:?})"
                )),
                other => other,
            })?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss at epoch {epoch}, batch {b} (items {:?})",
                    item_ids
                )));
            }
            total += loss;
            count += batch.len();
            for ((&(i, _), id), grad) in batch.iter().zip(&item_ids).zip(&grads) {
                let params = table.get_mut(id).expect("checked above");
                states[i].step(params, grad, config.learning_rate, &config.adam);
            }
        }
        let mean_loss = total / count.max(1) as f64;
        trace.push(EpochLoss { epoch, mean_loss });

        if let Some(es) = config.early_stopping {
            if mean_loss < best - es.min_delta {
                best = mean_loss;
                wait = 0;
            } else {
                wait += 1;
                if wait >= es.patience {
                    stopped_early = true;
                    break;
                }
            }
        }
    }
    Ok(TrainOutcome {
        table,
        trace,
        stopped_early,
    })
}

/// Early-fusion rankings for every query whose vector is in `query_store`.
pub fn ef_inference(
    table: &ItemEmbeddingTable,
    query_store: &EmbeddingStore,
    queries: &[Query],
) -> Result<Vec<ItemRanking>> {
    queries
        .iter()
        .map(|q| rank_items_ef(&q.query_id, table, query_store.require(&q.query_id)?))
        .collect()
}

/// `{"epoch": n, "mean_loss": x}` per line.
pub fn write_loss_trace<W: Write>(trace: &[EpochLoss], mut w: W) -> std::io::Result<()> {
    for e in trace {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::read_corpus;

    fn toy() -> (Corpus, EmbeddingStore) {
        let corpus = read_corpus(
            r#"{"item_id":"a","reviews":[{"review_id":"a1","text":"x","rating":1},{"review_id":"a2","text":"y","rating":1}]}
{"item_id":"b","reviews":[{"review_id":"b1","text":"x","rating":1},{"review_id":"b2","text":"y","rating":1}]}
{"item_id":"c","reviews":[{"review_id":"c1","text":"x","rating":1}]}"#
                .as_bytes(),
        )
        .unwrap();
        let store = EmbeddingStore::from_rows(
            StoreKind::Review,
            3,
            [
                ("a1", vec![1.0, 0.1, 0.0]),
                ("a2", vec![0.9, -0.1, 0.0]),
                ("b1", vec![0.0, 1.0, 0.1]),
                ("b2", vec![0.1, 0.8, 0.0]),
                ("c1", vec![0.0, 0.0, 1.0]),
            ],
        )
        .unwrap();
        (corpus, store)
    }

    #[test]
    fn adam_zero_grad_fresh_state() {
        let mut p = vec![1.0, -2.0, 3.5];
        let before = p.clone();
        AdamState::new(3).step(&mut p, &[0.0; 3], 0.1, &AdamConfig::default());
        assert_eq!(p, before);
    }

    #[test]
    fn adam_first_step_is_lr_sign() {
        // First bias-corrected step is lr * g / (|g| + eps).
        let mut p = vec![0.0, 0.0];
        AdamState::new(2).step(&mut p, &[2.0, -0.5], 0.01, &AdamConfig::default());
        assert!((p[0] + 0.01).abs() < 1e-9);
        assert!((p[1] - 0.01).abs() < 1e-9);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut p = vec![3.0, -4.0];
        let mut st = AdamState::new(2);
        for _ in 0..2000 {
            let g: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
            st.step(&mut p, &g, 0.05, &AdamConfig::default());
        }
        assert!(p.iter().all(|x| x.abs() < 1e-3), "{p:?}");
    }

    #[test]
    fn zero_epochs_is_average_ef() {
        let (corpus, store) = toy();
        let cfg = TrainConfig {
            epochs: 0,
            batch_size: 2,
            ..Default::default()
        };
        let out = cefr_train(&corpus, &store, &cfg, None).unwrap();
        assert_eq!(out.table, average_ef(&store, &corpus).unwrap());
        assert!(out.trace.is_empty());
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let (corpus, store) = toy();
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 3,
            learning_rate: 0.0,
            ..Default::default()
        };
        let out = cefr_train(&corpus, &store, &cfg, None).unwrap();
        assert_eq!(out.table, average_ef(&store, &corpus).unwrap());
        assert_eq!(out.trace.len(), 5);
    }

    #[test]
    fn training_is_deterministic_and_leaves_reviews_alone() {
        let (corpus, store) = toy();
        let before = store.clone();
        let cfg = TrainConfig {
            epochs: 20,
            batch_size: 2,
            learning_rate: 0.05,
            seed: 9,
            ..Default::default()
        };
        let a = cefr_train(&corpus, &store, &cfg, None).unwrap();
        let b = cefr_train(&corpus, &store, &cfg, None).unwrap();
        assert_eq!(a.table, b.table);
        assert_eq!(a.trace, b.trace);
        assert_ne!(a.table, average_ef(&store, &corpus).unwrap());
        assert_eq!(store, before);
    }

    #[test]
    fn batch_larger_than_items() {
        let (corpus, store) = toy();
        let cfg = TrainConfig {
            batch_size: 4,
            ..Default::default()
        };
        assert!(matches!(
            cefr_train(&corpus, &store, &cfg, None),
            Err(Error::InfeasibleBatch { .. })
        ));
    }

    #[test]
    fn non_finite_aborts() {
        let (corpus, store) = toy();
        let rows = corpus
            .items()
            .iter()
            .map(|i| (i.item_id.clone(), vec![f64::NAN; 3]))
            .collect();
        let init = ItemEmbeddingTable::from_rows(3, rows, InitSource::File).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 3,
            ..Default::default()
        };
        match cefr_train(&corpus, &store, &cfg, Some(init)) {
            Err(Error::NonFinite(msg)) => assert!(msg.contains("epoch 1"), "{msg}"),
            other => panic!("expected non-finite abort, got {other:?}"),
        }
    }

    #[test]
    fn table_store_round_trip() {
        let (corpus, store) = toy();
        let t = average_ef(&store, &corpus).unwrap();
        let s = t.to_store().unwrap();
        assert_eq!(s.kind(), StoreKind::Item);
        let back = ItemEmbeddingTable::from_store(&s, &corpus).unwrap();
        for (id, v) in t.iter() {
            let w = back.get(id).unwrap();
            assert!(v.iter().zip(w).all(|(a, b)| (*a as f32) as f64 == *b));
        }
        assert_eq!(back.init_source(), InitSource::File);
    }

    #[test]
    fn loss_trace_format() {
        let mut buf = Vec::new();
        write_loss_trace(
            &[EpochLoss {
                epoch: 1,
                mean_loss: 0.5,
            }],
            &mut buf,
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"epoch\":1,\"mean_loss\":0.5}\n"
        );
    }

    #[test]
    fn early_stopping_switch() {
        let off = TrainConfig {
            early_stopping: None,
            ..Default::default()
        };
        let json = serde_json::to_string(&off).unwrap();
        assert!(json.contains("\"early_stopping\":false"));
        assert_eq!(serde_json::from_str::<TrainConfig>(&json).unwrap(), off);
        let on: TrainConfig = serde_json::from_str(r#"{"early_stopping": true}"#).unwrap();
        assert_eq!(on.early_stopping, Some(EarlyStopping::default()));
        let custom: TrainConfig =
            serde_json::from_str(r#"{"early_stopping": {"patience": 2}}"#).unwrap();
        assert_eq!(custom.early_stopping.unwrap().patience, 2);
        assert_eq!(custom.early_stopping.unwrap().min_delta, 1e-4);
    }
}
