//! Self-supervised contrastive tuples built from the item/review structure.
//!
//! Positives come from the anchor's own item (optionally with the same rating,
//! optionally the least similar such review) or, for the single-document
//! baselines, from spans of the anchor review itself. Negatives are the other
//! positives of a batch, optionally plus one mined hard negative from another
//! item. Every batch draws its tuples from pairwise-distinct items.

use std::cmp::Reverse;
use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Item, Review};
use crate::dense::{dot, EmbeddingStore};
use crate::error::{Error, Result};
use crate::rng::{stream, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PositiveStrategy {
    /// Random other review of the same item.
    Si,
    /// Same item and same rating.
    SiSr,
    /// Least similar review of the same item.
    LsSi,
    /// Least similar review of the same item with the same rating.
    LsSiSr,
    /// Disjoint left/right segments of one review.
    Ict,
    /// Two independent, possibly overlapping spans of one review.
    Ic,
}

impl PositiveStrategy {
    pub fn same_rating(self) -> bool {
        matches!(self, Self::SiSr | Self::LsSiSr)
    }

    pub fn least_similar(self) -> bool {
        matches!(self, Self::LsSi | Self::LsSiSr)
    }

    pub fn is_span(self) -> bool {
        matches!(self, Self::Ict | Self::Ic)
    }

    /// The strategy used when no same-rating positive exists.
    pub fn without_rating(self) -> Self {
        match self {
            Self::SiSr => Self::Si,
            Self::LsSiSr => Self::LsSi,
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AnchorMode {
    Full,
    /// Random contiguous token span.
    Sasp,
    /// Random sentence.
    Sasn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NegativeStrategy {
    Ib,
    IbHn,
}

macro_rules! display_via_serde {
    ($($t:ty),*) => {$(
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let s = serde_json::to_value(self).map_err(|_| fmt::Error)?;
                f.write_str(s.as_str().unwrap_or_default())
            }
        }
        impl std::str::FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                let norm = s.trim().to_ascii_uppercase().replace(['-', '+'], "_");
                serde_json::from_value(serde_json::Value::String(norm))
                    .map_err(|_| Error::Config(format!("unknown value {s:?}")))
            }
        }
    )*};
}

display_via_serde!(PositiveStrategy, AnchorMode, NegativeStrategy);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub positive_strategy: PositiveStrategy,
    pub anchor_mode: AnchorMode,
    pub negative_strategy: NegativeStrategy,
    /// Requested strategy when it was infeasible and `positive_strategy` is its fallback.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_from: Option<PositiveStrategy>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextRef {
    pub review_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContrastiveTuple {
    pub item_id: String,
    /// Anchor text after sub-sampling.
    pub anchor: String,
    /// Review the anchor came from; `None` when the anchor is an item vector.
    pub anchor_review_id: Option<String>,
    pub positive: TextRef,
    pub hard_negatives: Vec<TextRef>,
    pub provenance: Provenance,
    pub seed: u64,
}

/// Tuples from pairwise-distinct items.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TupleBatch {
    pub tuples: Vec<ContrastiveTuple>,
}

impl TupleBatch {
    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn has_distinct_items(&self) -> bool {
        let mut seen = HashSet::new();
        self.tuples.iter().all(|t| seen.insert(t.item_id.as_str()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpanBounds {
    pub min: usize,
    pub max: usize,
}

impl Default for SpanBounds {
    fn default() -> Self {
        SpanBounds { min: 5, max: 32 }
    }
}

impl SpanBounds {
    fn validate(&self) -> Result<()> {
        if self.min == 0 || self.min > self.max {
            return Err(Error::Config(format!(
                "span bounds must satisfy 1 <= min <= max, got {}..={}",
                self.min, self.max
            )));
        }
        Ok(())
    }

    /// Span length drawn uniformly from `[min, max]`, both clipped to `n`.
    fn draw_len(&self, n: usize, rng: &mut impl Rng) -> usize {
        let lo = self.min.min(n);
        let hi = self.max.min(n);
        rng.gen_range(lo..=hi)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub positive_strategy: PositiveStrategy,
    pub anchor_mode: AnchorMode,
    pub negative_strategy: NegativeStrategy,
    pub per_item_count: usize,
    pub batch_size: usize,
    pub span: SpanBounds,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            positive_strategy: PositiveStrategy::Si,
            anchor_mode: AnchorMode::Full,
            negative_strategy: NegativeStrategy::Ib,
            per_item_count: 20,
            batch_size: 48,
            span: SpanBounds::default(),
            seed: 0,
        }
    }
}

fn require_store<'s>(store: Option<&'s EmbeddingStore>, why: &str) -> Result<&'s EmbeddingStore> {
    store.ok_or_else(|| Error::Config(format!("{why} needs review embeddings")))
}

fn item_of<'c>(corpus: &'c Corpus, review: &Review) -> Result<&'c Item> {
    corpus
        .item(&review.item_id)
        .ok_or_else(|| Error::UnknownItem(review.item_id.clone()))
}

/// Same-item reviews other than the anchor, filtered by rating if asked.
fn same_item_candidates<'c>(item: &'c Item, anchor: &Review, same_rating: bool) -> Vec<&'c Review> {
    item.reviews
        .iter()
        .filter(|r| r.review_id != anchor.review_id)
        .filter(|r| !same_rating || r.rating == anchor.rating)
        .collect()
}

fn least_similar<'c>(
    store: &EmbeddingStore,
    anchor: &Review,
    candidates: &[&'c Review],
) -> Result<&'c Review> {
    let a = store.require(&anchor.review_id)?;
    let mut best: Option<(f64, &Review)> = None;
    for &c in candidates {
        let s = dot(a, store.require(&c.review_id)?);
        let better = match best {
            None => true,
            Some((bs, br)) => s < bs || (s == bs && c.review_id < br.review_id),
        };
        if better {
            best = Some((s, c));
        }
    }
    best.map(|(_, r)| r)
        .ok_or_else(|| Error::NoEligiblePositive(anchor.review_id.clone()))
}

fn pick_positive<'c>(
    store: Option<&EmbeddingStore>,
    anchor: &Review,
    candidates: &[&'c Review],
    strategy: PositiveStrategy,
    rng: &mut impl Rng,
) -> Result<&'c Review> {
    if candidates.is_empty() {
        return Err(Error::NoEligiblePositive(anchor.review_id.clone()));
    }
    if strategy.least_similar() {
        least_similar(
            require_store(store, "least-similar sampling")?,
            anchor,
            candidates,
        )
    } else {
        Ok(candidates.choose(rng).copied().expect("non-empty"))
    }
}

/// Positive review for `anchor` under a same-item strategy.
pub fn sample_positive<'c>(
    corpus: &'c Corpus,
    store: Option<&EmbeddingStore>,
    anchor: &Review,
    strategy: PositiveStrategy,
    rng: &mut impl Rng,
) -> Result<&'c Review> {
    if strategy.is_span() {
        return Err(Error::Config(format!(
            "{strategy} draws spans, not reviews; use ict_pair / ic_pair"
        )));
    }
    let item = item_of(corpus, anchor)?;
    let candidates = same_item_candidates(item, anchor, strategy.same_rating());
    pick_positive(store, anchor, &candidates, strategy, rng)
}

/// Most similar review from any other item; ties go to the smaller review id.
pub fn select_hard_negative<'c>(
    store: &EmbeddingStore,
    anchor: &Review,
    corpus: &'c Corpus,
) -> Result<&'c Review> {
    let a = store.require(&anchor.review_id)?;
    let mut best: Option<(f64, &Review)> = None;
    for r in corpus.reviews().filter(|r| r.item_id != anchor.item_id) {
        let s = dot(a, store.require(&r.review_id)?);
        let better = match best {
            None => true,
            Some((bs, br)) => s > bs || (s == bs && r.review_id < br.review_id),
        };
        if better {
            best = Some((s, r));
        }
    }
    best.map(|(_, r)| r)
        .ok_or_else(|| Error::Config("hard negatives need at least two items".into()))
}

/// Caches hard negatives per anchor review for one embedding store.
#[derive(Debug, Default)]
pub struct HardNegativeMiner {
    store_fingerprint: Option<u64>,
    cache: HashMap<String, String>,
}

impl HardNegativeMiner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cached(&self) -> usize {
        self.cache.len()
    }

    pub fn get<'c>(
        &mut self,
        store: &EmbeddingStore,
        anchor: &Review,
        corpus: &'c Corpus,
    ) -> Result<&'c Review> {
        if self.store_fingerprint != Some(store.fingerprint()) {
            self.cache.clear();
            self.store_fingerprint = Some(store.fingerprint());
        }
        if let Some(id) = self.cache.get(&anchor.review_id) {
            if let Some(r) = corpus.review(id) {
                return Ok(r);
            }
        }
        let r = select_hard_negative(store, anchor, corpus)?;
        self.cache
            .insert(anchor.review_id.clone(), r.review_id.clone());
        Ok(r)
    }
}

/// Splits after each run of `.`, `!` or `?`. No abbreviation handling.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let mut end = i + c.len_utf8();
            while let Some(&(j, d)) = chars.peek() {
                if matches!(d, '.' | '!' | '?') {
                    end = j + d.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            out.push(&text[start..end]);
            start = end;
        }
    }
    out.push(&text[start..]);
    out.into_iter()
        .map(str::trim)
        .filter(|s| s.chars().any(char::is_alphanumeric))
        .collect()
}

fn tokens(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Shortens an anchor review to a random span or sentence.
pub fn subsample_anchor(
    text: &str,
    mode: AnchorMode,
    bounds: SpanBounds,
    rng: &mut impl Rng,
) -> String {
    match mode {
        AnchorMode::Full => text.to_string(),
        AnchorMode::Sasp => {
            let toks = tokens(text);
            if toks.is_empty() {
                return text.to_string();
            }
            let len = bounds.draw_len(toks.len(), rng);
            if len == toks.len() {
                return text.trim().to_string();
            }
            let start = rng.gen_range(0..=toks.len() - len);
            toks[start..start + len].join(" ")
        }
        AnchorMode::Sasn => {
            let sentences = split_sentences(text);
            if sentences.len() <= 1 {
                return text.to_string();
            }
            sentences.choose(rng).expect("non-empty").to_string()
        }
    }
}

/// Token ranges for an inverse-cloze pair: one split point, anchor side random.
pub fn ict_spans(n_tokens: usize, rng: &mut impl Rng) -> Result<(Range<usize>, Range<usize>)> {
    if n_tokens < 2 {
        return Err(Error::TooShort { tokens: n_tokens });
    }
    let split = rng.gen_range(1..n_tokens);
    let (left, right) = (0..split, split..n_tokens);
    Ok(if rng.gen_bool(0.5) {
        (left, right)
    } else {
        (right, left)
    })
}

/// Two independently cropped spans; they may overlap.
pub fn ic_spans(
    n_tokens: usize,
    bounds: SpanBounds,
    rng: &mut impl Rng,
) -> Result<(Range<usize>, Range<usize>)> {
    if n_tokens < 2 {
        return Err(Error::TooShort { tokens: n_tokens });
    }
    bounds.validate()?;
    let mut crop = || {
        let len = bounds.draw_len(n_tokens, rng);
        let start = rng.gen_range(0..=n_tokens - len);
        start..start + len
    };
    let a = crop();
    let b = crop();
    Ok((a, b))
}

pub fn ict_pair(text: &str, rng: &mut impl Rng) -> Result<(String, String)> {
    let toks = tokens(text);
    let (a, p) = ict_spans(toks.len(), rng)?;
    Ok((toks[a].join(" "), toks[p].join(" ")))
}

pub fn ic_pair(text: &str, bounds: SpanBounds, rng: &mut impl Rng) -> Result<(String, String)> {
    let toks = tokens(text);
    let (a, p) = ic_spans(toks.len(), bounds, rng)?;
    Ok((toks[a].join(" "), toks[p].join(" ")))
}

/// Batches plus the items that could not produce any tuple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TupleSet {
    pub batches: Vec<TupleBatch>,
    pub skipped_items: Vec<String>,
}

impl TupleSet {
    pub fn n_tuples(&self) -> usize {
        self.batches.iter().map(TupleBatch::len).sum()
    }

    pub fn tuples(&self) -> impl Iterator<Item = &ContrastiveTuple> {
        self.batches.iter().flat_map(|b| b.tuples.iter())
    }
}

fn validate_config(config: &SamplingConfig, store: Option<&EmbeddingStore>) -> Result<()> {
    if config.per_item_count == 0 {
        return Err(Error::Config("per_item_count must be at least 1".into()));
    }
    if config.batch_size < 2 {
        return Err(Error::Config("batch size must be at least 2".into()));
    }
    config.span.validate()?;
    if config.positive_strategy.is_span() && config.anchor_mode != AnchorMode::Full {
        return Err(Error::Config(format!(
            "{} builds its own spans; anchor mode must be FULL",
            config.positive_strategy
        )));
    }
    if config.positive_strategy.least_similar() {
        require_store(store, "least-similar sampling")?;
    }
    if config.negative_strategy == NegativeStrategy::IbHn {
        require_store(store, "hard-negative mining")?;
    }
    Ok(())
}

/// Tuples for one item, or `None` when the item cannot produce any.
fn item_tuples(
    corpus: &Corpus,
    store: Option<&EmbeddingStore>,
    item: &Item,
    config: &SamplingConfig,
    miner: &mut HardNegativeMiner,
) -> Result<Option<Vec<ContrastiveTuple>>> {
    let mut rng: StreamRng = stream(config.seed, &format!("sampling/item/{}", item.item_id));
    let requested = config.positive_strategy;

    // Anchor pool and the strategy actually used for this item.
    let (mut pool, strategy): (Vec<&Review>, PositiveStrategy) = if requested.is_span() {
        let pool: Vec<_> = item
            .reviews
            .iter()
            .filter(|r| tokens(&r.text).len() >= 2)
            .collect();
        (pool, requested)
    } else {
        if item.reviews.len() < 2 {
            return Ok(None);
        }
        let with_partner: Vec<_> = item
            .reviews
            .iter()
            .filter(|r| !same_item_candidates(item, r, true).is_empty())
            .collect();
        if requested.same_rating() && with_partner.is_empty() {
            (item.reviews.iter().collect(), requested.without_rating())
        } else if requested.same_rating() {
            (with_partner, requested)
        } else {
            (item.reviews.iter().collect(), requested)
        }
    };
    if pool.is_empty() {
        return Ok(None);
    }
    let provenance = Provenance {
        positive_strategy: strategy,
        anchor_mode: config.anchor_mode,
        negative_strategy: config.negative_strategy,
        fallback_from: (strategy != requested).then_some(requested),
    };

    pool.shuffle(&mut rng);
    let mut used_positives: HashSet<&str> = HashSet::new();
    let mut out = Vec::with_capacity(config.per_item_count);
    for n in 0..config.per_item_count {
        let anchor_review = pool[n % pool.len()];
        let (anchor, positive) = match strategy {
            PositiveStrategy::Ict | PositiveStrategy::Ic => {
                let (a, p) = if strategy == PositiveStrategy::Ict {
                    ict_pair(&anchor_review.text, &mut rng)?
                } else {
                    ic_pair(&anchor_review.text, config.span, &mut rng)?
                };
                let positive = TextRef {
                    review_id: anchor_review.review_id.clone(),
                    text: p,
                };
                (a, positive)
            }
            _ => {
                let candidates = same_item_candidates(item, anchor_review, strategy.same_rating());
                let fresh: Vec<&Review> = candidates
                    .iter()
                    .copied()
                    .filter(|r| !used_positives.contains(r.review_id.as_str()))
                    .collect();
                let pick_from = if strategy.least_similar() || fresh.is_empty() {
                    &candidates
                } else {
                    &fresh
                };
                let pos = pick_positive(store, anchor_review, pick_from, strategy, &mut rng)?;
                used_positives.insert(&pos.review_id);
                let anchor = subsample_anchor(
                    &anchor_review.text,
                    config.anchor_mode,
                    config.span,
                    &mut rng,
                );
                let positive = TextRef {
                    review_id: pos.review_id.clone(),
                    text: pos.text.clone(),
                };
                (anchor, positive)
            }
        };
        let hard_negatives = match config.negative_strategy {
            NegativeStrategy::Ib => Vec::new(),
            NegativeStrategy::IbHn => {
                let store = require_store(store, "hard-negative mining")?;
                let r = miner.get(store, anchor_review, corpus)?;
                vec![TextRef {
                    review_id: r.review_id.clone(),
                    text: r.text.clone(),
                }]
            }
        };
        out.push(ContrastiveTuple {
            item_id: item.item_id.clone(),
            anchor,
            anchor_review_id: Some(anchor_review.review_id.clone()),
            positive,
            hard_negatives,
            provenance,
            seed: config.seed,
        });
    }
    Ok(Some(out))
}

/// Packs per-item queues into batches of at most `batch_size` distinct items.
///
/// Each batch takes the items with the most remaining entries (ties by a seeded
/// shuffle), so queues drain evenly and only the final batch can be short.
pub fn pack_batches<T>(
    mut per_item: Vec<Vec<T>>,
    batch_size: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<T>>> {
    per_item.retain(|q| !q.is_empty());
    if per_item.len() < batch_size {
        return Err(Error::InfeasibleBatch {
            batch_size,
            available: per_item.len(),
        });
    }
    per_item.shuffle(rng);
    let mut queues: Vec<VecDeque<T>> = per_item.into_iter().map(Into::into).collect();
    let mut batches = Vec::new();
    loop {
        let mut order: Vec<usize> = (0..queues.len())
            .filter(|&i| !queues[i].is_empty())
            .collect();
        if order.is_empty() {
            break;
        }
        order.sort_by_key(|&i| (Reverse(queues[i].len()), i));
        order.truncate(batch_size);
        order.sort_unstable();
        batches.push(
            order
                .into_iter()
                .map(|i| queues[i].pop_front().expect("non-empty"))
                .collect(),
        );
    }
    Ok(batches)
}

/// Builds `per_item_count` tuples for every eligible item and packs them into
/// batches. Deterministic for a fixed corpus, store and config.
pub fn build_tuple_set(
    corpus: &Corpus,
    store: Option<&EmbeddingStore>,
    config: &SamplingConfig,
) -> Result<TupleSet> {
    validate_config(config, store)?;
    let mut miner = HardNegativeMiner::new();
    let mut per_item = Vec::new();
    let mut skipped_items = Vec::new();
    for item in corpus.items() {
        match item_tuples(corpus, store, item, config, &mut miner)? {
            Some(tuples) => per_item.push(tuples),
            None => skipped_items.push(item.item_id.clone()),
        }
    }
    let mut rng = stream(config.seed, "sampling/batches");
    let batches = pack_batches(per_item, config.batch_size, &mut rng)?;
    Ok(TupleSet {
        batches: batches
            .into_iter()
            .map(|tuples| TupleBatch { tuples })
            .collect(),
        skipped_items,
    })
}

#[derive(Serialize, Deserialize)]
struct TupleRecord {
    batch_index: usize,
    item_id: String,
    anchor: String,
    positive: String,
    hard_negatives: Vec<String>,
    provenance: Provenance,
    seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    anchor_review_id: Option<String>,
    positive_review_id: String,
    hard_negative_ids: Vec<String>,
}

/// One JSON record per tuple, in batch order, each tagged with `batch_index`.
pub fn write_tuples<W: Write>(batches: &[TupleBatch], mut w: W) -> std::io::Result<()> {
    for (batch_index, batch) in batches.iter().enumerate() {
        for t in &batch.tuples {
            let rec = TupleRecord {
                batch_index,
                item_id: t.item_id.clone(),
                anchor: t.anchor.clone(),
                positive: t.positive.text.clone(),
                hard_negatives: t.hard_negatives.iter().map(|h| h.text.clone()).collect(),
                provenance: t.provenance,
                seed: t.seed,
                anchor_review_id: t.anchor_review_id.clone(),
                positive_review_id: t.positive.review_id.clone(),
                hard_negative_ids: t
                    .hard_negatives
                    .iter()
                    .map(|h| h.review_id.clone())
                    .collect(),
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()
}

pub fn read_tuples<R: BufRead>(reader: R) -> Result<Vec<TupleBatch>> {
    let mut batches: Vec<TupleBatch> = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<tuples>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: n + 1,
            message,
        };
        let rec: TupleRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if rec.hard_negatives.len() != rec.hard_negative_ids.len() {
            return Err(parse_err(
                "hard negative texts and ids differ in length".into(),
            ));
        }
        match rec.batch_index.cmp(&batches.len()) {
            std::cmp::Ordering::Equal => batches.push(TupleBatch::default()),
            std::cmp::Ordering::Less if rec.batch_index + 1 == batches.len() => {}
            _ => {
                return Err(parse_err(format!(
                    "batch_index {} out of order",
                    rec.batch_index
                )))
            }
        }
        batches
            .last_mut()
            .expect("pushed above")
            .tuples
            .push(ContrastiveTuple {
                item_id: rec.item_id,
                anchor: rec.anchor,
                anchor_review_id: rec.anchor_review_id,
                positive: TextRef {
                    review_id: rec.positive_review_id,
                    text: rec.positive,
                },
                hard_negatives: rec
                    .hard_negative_ids
                    .into_iter()
                    .zip(rec.hard_negatives)
                    .map(|(review_id, text)| TextRef { review_id, text })
                    .collect(),
                provenance: rec.provenance,
                seed: rec.seed,
            });
    }
    for (i, b) in batches.iter().enumerate() {
        if !b.has_distinct_items() {
            return Err(Error::InvalidBatch(format!("batch {i} repeats an item")));
        }
    }
    Ok(batches)
}
