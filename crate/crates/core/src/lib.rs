//! Reviewed-item retrieval: rank items by the evidence in their reviews.
//!
//! * [`sparse`] and [`dense`] score queries against individual reviews.
//! * [`fusion`] turns review scores into item rankings (late fusion) or scores
//!   item vectors directly (early fusion).
//! * [`sampling`] builds contrastive training tuples from the item/review
//!   structure and exports them for an external encoder trainer.
//! * [`contrastive`] holds the n-pair loss and its gradients, and [`cefr`]
//!   learns item vectors with it.
//! * [`eval`] computes R-Precision and MAP with across-seed intervals.

pub mod cefr;
pub mod contrastive;
pub mod corpus;
pub mod dense;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod rng;
pub mod sampling;
pub mod scoring;
pub mod sparse;
pub mod synth;

pub use cefr::{cefr_train, ef_inference, ItemEmbeddingTable, TrainConfig, TrainOutcome};
pub use corpus::{load_corpus, load_queries, Corpus, Item, Query, Review};
pub use dense::{load_embeddings, similarity, EmbeddingStore, StoreKind};
pub use error::{Error, Result};
pub use eval::{aggregate, evaluate_run, load_qrels, MetricReport, Qrels, RunMetrics};
pub use fusion::{
    average_ef, late_fuse, rank_items_ef, rank_items_lf, FusionK, FusionMode, ItemRanking,
};
pub use sampling::{
    build_tuple_set, AnchorMode, ContrastiveTuple, NegativeStrategy, PositiveStrategy,
    SamplingConfig, TupleBatch, TupleSet,
};
pub use scoring::{ItemReviewScores, ReviewScore};
pub use sparse::{SparseIndex, SparseModel};
