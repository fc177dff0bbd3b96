#![allow(dead_code)]

use std::path::Path;

use rand::Rng;
use rir_core::dense::StoreKind;
use rir_core::{Corpus, EmbeddingStore, Item, Review};

pub const WORDS: &[&str] = &[
    "pizza", "crust", "sushi", "fresh", "noodle", "spicy", "vegan", "burger", "fries", "coffee",
    "patio", "cozy", "loud", "cheap", "pricey", "friendly", "slow", "brunch", "tacos", "salad",
];

/// `spec[i]` lists item i's reviews as (word indices, rating).
pub fn corpus_from(spec: &[Vec<(Vec<usize>, u8)>]) -> Corpus {
    let items = spec
        .iter()
        .enumerate()
        .map(|(i, reviews)| {
            let item_id = format!("i{i:02}");
            Item {
                item_id: item_id.clone(),
                name: format!("Item {i}"),
                categories: if i % 3 == 0 {
                    vec![]
                } else {
                    vec!["Food".into(), format!("Cat{i}")]
                },
                reviews: reviews
                    .iter()
                    .enumerate()
                    .map(|(k, (words, rating))| Review {
                        review_id: format!("i{i:02}r{k:02}"),
                        item_id: item_id.clone(),
                        text: words
                            .iter()
                            .map(|&w| WORDS[w % WORDS.len()])
                            .collect::<Vec<_>>()
                            .join(" "),
                        rating: *rating,
                    })
                    .collect(),
            }
        })
        .collect();
    Corpus::new(items).expect("valid corpus")
}

/// Reviews of 1..=max_words words, some split into sentences.
pub fn random_corpus(
    rng: &mut impl Rng,
    n_items: usize,
    max_reviews: usize,
    max_words: usize,
) -> Corpus {
    let items = (0..n_items)
        .map(|i| {
            let item_id = format!("i{i:02}");
            let n_reviews = rng.gen_range(1..=max_reviews);
            Item {
                item_id: item_id.clone(),
                name: format!("Item {i}"),
                categories: vec![format!("Cat{}", i % 4)],
                reviews: (0..n_reviews)
                    .map(|k| {
                        let n_words = rng.gen_range(1..=max_words);
                        let mut text = String::new();
                        for w in 0..n_words {
                            if w > 0 {
                                text.push(' ');
                            }
                            text.push_str(WORDS[rng.gen_range(0..WORDS.len())]);
                            if rng.gen_bool(0.2) {
                                text.push(['.', '!', '?'][rng.gen_range(0..3)]);
                            }
                        }
                        Review {
                            review_id: format!("i{i:02}r{k:02}"),
                            item_id: item_id.clone(),
                            text,
                            rating: rng.gen_range(1..=5),
                        }
                    })
                    .collect(),
            }
        })
        .collect();
    Corpus::new(items).expect("valid corpus")
}

/// Review vectors with small-integer entries, so dot-product ties occur.
pub fn random_store(rng: &mut impl Rng, corpus: &Corpus, dim: usize) -> EmbeddingStore {
    EmbeddingStore::from_rows(
        StoreKind::Review,
        dim,
        corpus.reviews().map(|r| {
            let v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-2i32..=2) as f32).collect();
            (r.review_id.clone(), v)
        }),
    )
    .expect("valid store")
}

/// Writes the store as a RIRE file and loads it back.
pub fn through_file(store: &EmbeddingStore, dir: &Path, name: &str) -> EmbeddingStore {
    let path = dir.join(name);
    store.save(&path).expect("write embeddings");
    rir_core::load_embeddings(&path, store.kind()).expect("read embeddings")
}

pub fn random_vec(rng: &mut impl Rng, m: usize, bound: f64) -> Vec<f64> {
    (0..m).map(|_| rng.gen_range(-bound..=bound)).collect()
}
