//! Loading inputs and producing rankings, shared by `search` and `sweep`.

use std::path::Path;

use anyhow::{bail, Context, Result};
use rir_core::dense::{self, StoreKind};
use rir_core::fusion::RunEntry;
use rir_core::{
    average_ef, cefr_train, ef_inference, load_corpus, load_embeddings, rank_items_lf, Corpus,
    EmbeddingStore, FusionK, ItemEmbeddingTable, ItemRanking, ItemReviewScores, Query, SparseIndex,
    SparseModel,
};

use crate::config::{with_seed, ExperimentConfig, Retrieval};

pub fn read_corpus(path: &Path, ppmd: bool) -> Result<Corpus> {
    let corpus = load_corpus(path).with_context(|| format!("loading corpus {}", path.display()))?;
    if ppmd {
        Ok(corpus.ppmd_transform()?)
    } else {
        Ok(corpus)
    }
}

pub fn read_store(path: &Path, kind: StoreKind) -> Result<EmbeddingStore> {
    load_embeddings(path, kind).with_context(|| format!("loading embeddings {}", path.display()))
}

pub enum Backend {
    Sparse {
        model: SparseModel,
        index: SparseIndex,
    },
    Dense {
        reviews: EmbeddingStore,
        queries: EmbeddingStore,
    },
}

impl Backend {
    pub fn open(retrieval: &Retrieval, corpus: &Corpus, seed: u64) -> Result<Self> {
        Ok(match retrieval {
            Retrieval::Bm25 { index } | Retrieval::Tfidf { index } => {
                let index = match index {
                    Some(path) => {
                        let index = SparseIndex::load(path)
                            .with_context(|| format!("loading index {}", path.display()))?;
                        if !index.matches(corpus) {
                            bail!("index {} was built from a different corpus", path.display());
                        }
                        index
                    }
                    None => SparseIndex::build(corpus)?,
                };
                Backend::Sparse {
                    model: retrieval.sparse_model().expect("sparse backend"),
                    index,
                }
            }
            Retrieval::Dense { reviews, queries } => Backend::Dense {
                reviews: read_store(&with_seed(reviews, seed), StoreKind::Review)?,
                queries: read_store(&with_seed(queries, seed), StoreKind::Query)?,
            },
        })
    }

    /// Per-item review scores for one query.
    pub fn review_scores(&self, corpus: &Corpus, query: &Query) -> Result<ItemReviewScores> {
        Ok(match self {
            Backend::Sparse { model, index } => index.score_reviews(*model, &query.text, corpus)?,
            Backend::Dense { reviews, queries } => {
                dense::score_reviews(reviews, queries.require(&query.query_id)?, corpus)?
            }
        })
    }
}

/// Late-fusion rankings for several K from one pass of review scoring.
pub fn late_fusion(
    backend: &Backend,
    corpus: &Corpus,
    queries: &[Query],
    ks: &[FusionK],
) -> Result<Vec<Vec<ItemRanking>>> {
    let mut out = vec![Vec::with_capacity(queries.len()); ks.len()];
    for q in queries {
        let scores = backend.review_scores(corpus, q)?;
        for (slot, &k) in out.iter_mut().zip(ks) {
            slot.push(rank_items_lf(&q.query_id, &scores, k)?);
        }
    }
    Ok(out)
}

/// Item table for early fusion: trained, read from file, or Average EF.
pub fn item_table(
    config: &ExperimentConfig,
    corpus: &Corpus,
    reviews: &EmbeddingStore,
    seed: u64,
) -> Result<ItemEmbeddingTable> {
    if config.fusion.train {
        let mut train = config.cefr.clone();
        train.seed = seed;
        return Ok(cefr_train(corpus, reviews, &train, None)?.table);
    }
    match &config.fusion.items {
        Some(path) => {
            let store = read_store(&with_seed(path, seed), StoreKind::Item)?;
            Ok(ItemEmbeddingTable::from_store(&store, corpus)?)
        }
        None => Ok(average_ef(reviews, corpus)?),
    }
}

pub fn early_fusion(
    backend: &Backend,
    config: &ExperimentConfig,
    corpus: &Corpus,
    queries: &[Query],
    seed: u64,
) -> Result<Vec<ItemRanking>> {
    let Backend::Dense {
        reviews,
        queries: qstore,
    } = backend
    else {
        bail!("early fusion needs the dense backend");
    };
    let table = item_table(config, corpus, reviews, seed)?;
    Ok(ef_inference(&table, qstore, queries)?)
}

pub fn to_run(rankings: Vec<ItemRanking>) -> Vec<RunEntry> {
    rankings
        .into_iter()
        .map(|r| RunEntry {
            query_id: r.query_id,
            ranking: r.items,
        })
        .collect()
}
