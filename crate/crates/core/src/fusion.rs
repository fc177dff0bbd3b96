//! Late fusion (top-K mean of review scores) and early fusion (item vectors).

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::num::NonZeroUsize;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cefr::{InitSource, ItemEmbeddingTable};
use crate::corpus::Corpus;
use crate::dense::{dot, EmbeddingStore};
use crate::error::{Error, Result};
use crate::scoring::{by_score_desc, ItemReviewScores, ReviewScore};

/// How many of an item's best review scores are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FusionK {
    Top(NonZeroUsize),
    All,
}

impl FusionK {
    pub fn top(k: usize) -> Option<Self> {
        NonZeroUsize::new(k).map(FusionK::Top)
    }

    fn take(self, available: usize) -> usize {
        match self {
            FusionK::Top(k) => k.get().min(available),
            FusionK::All => available,
        }
    }
}

impl fmt::Display for FusionK {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FusionK::Top(k) => write!(f, "{k}"),
            FusionK::All => f.write_str("all"),
        }
    }
}

impl FromStr for FusionK {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(FusionK::All);
        }
        s.parse::<usize>()
            .ok()
            .and_then(FusionK::top)
            .ok_or_else(|| {
                Error::Config(format!(
                    "K must be a positive integer or \"all\", got {s:?}"
                ))
            })
    }
}

impl Serialize for FusionK {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            FusionK::Top(k) => s.serialize_u64(k.get() as u64),
            FusionK::All => s.serialize_str("all"),
        }
    }
}

impl<'de> Deserialize<'de> for FusionK {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => FusionK::top(n as usize)
                .ok_or_else(|| serde::de::Error::custom("K must be positive")),
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    Lf,
    Ef,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub mode: FusionMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<FusionK>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedItem {
    pub item_id: String,
    pub score: f64,
}

/// Every corpus item exactly once, scores non-increasing, ties by item id.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemRanking {
    pub query_id: String,
    pub items: Vec<RankedItem>,
    pub config: FusionConfig,
}

impl ItemRanking {
    fn sorted(query_id: &str, mut items: Vec<RankedItem>, config: FusionConfig) -> Self {
        items.sort_by(|a, b| by_score_desc(a.score, &a.item_id, b.score, &b.item_id));
        ItemRanking {
            query_id: query_id.to_string(),
            items,
            config,
        }
    }

    pub fn item_ids(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|r| r.item_id.as_str())
    }
}

/// Mean of the best `min(K, n)` scores. The input need not be sorted.
pub fn late_fuse(scores: &[f64], k: FusionK) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyScores);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let take = k.take(sorted.len());
    Ok(sorted[..take].iter().sum::<f64>() / take as f64)
}

/// Like [`late_fuse`] for lists already sorted best first.
fn fuse_sorted(scores: &[ReviewScore], k: FusionK) -> f64 {
    let take = k.take(scores.len());
    scores[..take].iter().map(|s| s.score).sum::<f64>() / take as f64
}

pub fn rank_items_lf(
    query_id: &str,
    per_item: &ItemReviewScores,
    k: FusionK,
) -> Result<ItemRanking> {
    if per_item.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut items = Vec::with_capacity(per_item.len());
    for (item_id, scores) in per_item {
        if scores.is_empty() {
            return Err(Error::EmptyItem(item_id.clone()));
        }
        let sorted = scores
            .windows(2)
            .all(|w| w[0].score.total_cmp(&w[1].score).is_ge());
        let score = if sorted {
            fuse_sorted(scores, k)
        } else {
            let raw: Vec<f64> = scores.iter().map(|s| s.score).collect();
            late_fuse(&raw, k)?
        };
        items.push(RankedItem {
            item_id: item_id.clone(),
            score,
        });
    }
    Ok(ItemRanking::sorted(
        query_id,
        items,
        FusionConfig {
            mode: FusionMode::Lf,
            k: Some(k),
        },
    ))
}

/// Item vector = mean of its review vectors.
pub fn average_ef(store: &EmbeddingStore, corpus: &Corpus) -> Result<ItemEmbeddingTable> {
    let dim = store.dim();
    let mut rows = Vec::with_capacity(corpus.n_items());
    for item in corpus.items() {
        if item.reviews.is_empty() {
            return Err(Error::EmptyItem(item.item_id.clone()));
        }
        let mut acc = vec![0f64; dim];
        for r in &item.reviews {
            for (a, &x) in acc.iter_mut().zip(store.require(&r.review_id)?) {
                *a += x as f64;
            }
        }
        let n = item.reviews.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        rows.push((item.item_id.clone(), acc));
    }
    ItemEmbeddingTable::from_rows(dim, rows, InitSource::AverageEf)
}

pub fn rank_items_ef<Q>(
    query_id: &str,
    table: &ItemEmbeddingTable,
    q_vec: &[Q],
) -> Result<ItemRanking>
where
    Q: Copy + Into<f64>,
{
    if q_vec.len() != table.dim() {
        return Err(Error::DimensionMismatch {
            expected: table.dim(),
            actual: q_vec.len(),
        });
    }
    let items = table
        .iter()
        .map(|(id, v)| RankedItem {
            item_id: id.to_string(),
            score: dot(q_vec, v),
        })
        .collect();
    Ok(ItemRanking::sorted(
        query_id,
        items,
        FusionConfig {
            mode: FusionMode::Ef,
            k: None,
        },
    ))
}

#[derive(Serialize, Deserialize)]
struct RunRecord {
    query_id: String,
    ranking: Vec<RankedItem>,
}

/// Run file: one `{"query_id", "ranking": [{"item_id", "score"}]}` per line.
pub fn write_run<W: Write>(rankings: &[ItemRanking], mut w: W) -> std::io::Result<()> {
    for r in rankings {
        let rec = RunRecord {
            query_id: r.query_id.clone(),
            ranking: r.items.clone(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn save_run(rankings: &[ItemRanking], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_run(rankings, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

/// A ranking as read back from a run file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub query_id: String,
    pub ranking: Vec<RankedItem>,
}

pub fn read_run<R: BufRead>(reader: R) -> Result<Vec<RunEntry>> {
    let mut out: Vec<RunEntry> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<run>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RunEntry = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: n + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(rec.query_id.clone()) {
            return Err(Error::DuplicateQuery(rec.query_id));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn load_run(path: impl AsRef<Path>) -> Result<Vec<RunEntry>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_run(BufReader::new(file))
}
