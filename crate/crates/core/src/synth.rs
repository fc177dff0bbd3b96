//! Synthetic corpora with clustered review embeddings, for tests, benchmarks
//! and smoke runs without an external encoder.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::{Corpus, Item, Query, Review};
use crate::dense::{EmbeddingStore, StoreKind};
use crate::error::Result;
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterSpec {
    pub n_items: usize,
    pub reviews_per_item: usize,
    pub dim: usize,
    /// Per-coordinate Gaussian noise around the item mean.
    pub sigma: f64,
    /// Length of each item's mean vector.
    pub scale: f64,
    pub seed: u64,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        ClusterSpec {
            n_items: 10,
            reviews_per_item: 20,
            dim: 16,
            sigma: 0.1,
            scale: 1.0,
            seed: 0,
        }
    }
}

pub struct Clustered {
    pub corpus: Corpus,
    pub reviews: EmbeddingStore,
    /// Item mean vectors, one per item in corpus order.
    pub means: Vec<Vec<f64>>,
}

const WORDS: &[&str] = &[
    "pizza", "crust", "sushi", "fresh", "noodles", "spicy", "vegan", "burger", "fries", "coffee",
    "patio", "cozy", "loud", "cheap", "pricey", "friendly", "slow", "brunch", "tacos", "salad",
];

pub fn item_id(i: usize) -> String {
    format!("item{i:03}")
}

pub fn review_id(i: usize, k: usize) -> String {
    format!("item{i:03}-r{k:03}")
}

/// Items with orthogonal means `scale * e_i` (requires `dim >= n_items`, else
/// means are random unit directions) and reviews at `mean + N(0, sigma^2)`.
pub fn clustered(spec: ClusterSpec) -> Result<Clustered> {
    let mut rng = stream(spec.seed, "synth/clustered");
    let noise = Normal::new(0.0, spec.sigma.max(0.0)).expect("finite sigma");
    let unit = Normal::new(0.0, 1.0).expect("valid");
    let means: Vec<Vec<f64>> = (0..spec.n_items)
        .map(|i| {
            if spec.dim >= spec.n_items {
                let mut v = vec![0.0; spec.dim];
                v[i] = spec.scale;
                v
            } else {
                let v: Vec<f64> = (0..spec.dim).map(|_| unit.sample(&mut rng)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                v.into_iter().map(|x| spec.scale * x / norm).collect()
            }
        })
        .collect();
    let mut items = Vec::with_capacity(spec.n_items);
    let mut rows = Vec::with_capacity(spec.n_items * spec.reviews_per_item);
    for (i, mean) in means.iter().enumerate() {
        let reviews = (0..spec.reviews_per_item)
            .map(|k| {
                let n_words = rng.gen_range(4..12);
                let text: Vec<&str> = (0..n_words)
                    .map(|_| WORDS[rng.gen_range(0..WORDS.len())])
                    .collect();
                let v: Vec<f32> = mean
                    .iter()
                    .map(|m| (m + noise.sample(&mut rng)) as f32)
                    .collect();
                rows.push((review_id(i, k), v));
                Review {
                    review_id: review_id(i, k),
                    item_id: item_id(i),
                    text: format!("{}.", text.join(" ")),
                    rating: rng.gen_range(1..=5),
                }
            })
            .collect();
        items.push(Item {
            item_id: item_id(i),
            name: format!("Item {i}"),
            categories: vec![WORDS[i % WORDS.len()].to_string()],
            reviews,
        });
    }
    Ok(Clustered {
        corpus: Corpus::new(items)?,
        reviews: EmbeddingStore::from_rows(StoreKind::Review, spec.dim, rows)?,
        means,
    })
}

/// One query per item whose vector is the mean of that item's review vectors.
pub fn mean_queries(data: &Clustered) -> Result<(Vec<Query>, EmbeddingStore)> {
    let dim = data.reviews.dim();
    let mut queries = Vec::new();
    let mut rows = Vec::new();
    for item in data.corpus.items() {
        let mut acc = vec![0f64; dim];
        for r in &item.reviews {
            for (a, &x) in acc.iter_mut().zip(data.reviews.require(&r.review_id)?) {
                *a += x as f64;
            }
        }
        let n = item.reviews.len() as f64;
        let qid = format!("q-{}", item.item_id);
        rows.push((qid.clone(), acc.iter().map(|x| (x / n) as f32).collect()));
        queries.push(Query {
            query_id: qid,
            text: format!("like {}", item.name),
            category: None,
        });
    }
    Ok((
        queries,
        EmbeddingStore::from_rows(StoreKind::Query, dim, rows)?,
    ))
}
