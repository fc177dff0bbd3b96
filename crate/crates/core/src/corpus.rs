//! The two-level item/review corpus, queries, and the meta-data prepend transform.
//!
//! A corpus file holds one item per line:
//!
//! ```text
//! {"item_id": "a", "name": "Pizzeria", "categories": ["Pizza"], "reviews": [{"review_id": "r1", "text": "...", "rating": 5}]}
//! ```
//!
//! Items keep file order; reviews keep their order within the item.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dense::fnv1a;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Review {
    pub review_id: String,
    #[serde(skip)]
    pub item_id: String,
    pub text: String,
    pub rating: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub item_id: String,
    pub name: String,
    pub categories: Vec<String>,
    pub reviews: Vec<Review>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

/// Immutable after construction. Review ids are unique across the whole corpus
/// and every review belongs to exactly one item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    items: Vec<Item>,
    item_index: HashMap<String, usize>,
    review_index: HashMap<String, (usize, usize)>,
    n_reviews: usize,
    meta_prepended: bool,
    text_digest: u64,
}

#[derive(Deserialize)]
struct RawReview {
    review_id: String,
    text: String,
    rating: i64,
}

#[derive(Deserialize)]
struct RawItem {
    item_id: String,
    #[serde(default)]
    name: String,
    #[serde(default)]
    categories: Vec<String>,
    reviews: Vec<RawReview>,
}

impl Corpus {
    /// Builds a corpus, checking every invariant.
    pub fn new(items: Vec<Item>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut item_index = HashMap::with_capacity(items.len());
        let mut review_index = HashMap::new();
        let mut n_reviews = 0;
        for (i, item) in items.iter().enumerate() {
            if item_index.insert(item.item_id.clone(), i).is_some() {
                return Err(Error::DuplicateItem(item.item_id.clone()));
            }
            if item.reviews.is_empty() {
                return Err(Error::EmptyItem(item.item_id.clone()));
            }
            for (k, review) in item.reviews.iter().enumerate() {
                if review.item_id != item.item_id {
                    return Err(Error::InvalidRecord(format!(
                        "review {:?} claims item {:?} but is listed under {:?}",
                        review.review_id, review.item_id, item.item_id
                    )));
                }
                if review.text.trim().is_empty() {
                    return Err(Error::InvalidRecord(format!(
                        "review {:?} has empty text",
                        review.review_id
                    )));
                }
                if !(1..=5).contains(&review.rating) {
                    return Err(Error::RatingOutOfRange {
                        review_id: review.review_id.clone(),
                        rating: review.rating as i64,
                    });
                }
                if review_index
                    .insert(review.review_id.clone(), (i, k))
                    .is_some()
                {
                    return Err(Error::DuplicateReview(review.review_id.clone()));
                }
                n_reviews += 1;
            }
        }
        Ok(Corpus {
            items,
            item_index,
            review_index,
            n_reviews,
            meta_prepended: false,
            text_digest: 0,
        }
        .with_digest())
    }

    fn with_digest(mut self) -> Self {
        let mut h = 0xcbf2_9ce4_8422_2325;
        for r in self.reviews() {
            h = fnv1a(r.review_id.bytes().chain([0xff]), h);
            h = fnv1a(r.text.bytes().chain([0xff]), h);
        }
        self.text_digest = h;
        self
    }

    /// Hash of review ids and texts in corpus order.
    pub fn text_digest(&self) -> u64 {
        self.text_digest
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_reviews(&self) -> usize {
        self.n_reviews
    }

    pub fn item(&self, item_id: &str) -> Option<&Item> {
        self.item_index.get(item_id).map(|&i| &self.items[i])
    }

    pub fn review(&self, review_id: &str) -> Option<&Review> {
        self.review_index
            .get(review_id)
            .map(|&(i, k)| &self.items[i].reviews[k])
    }

    /// All reviews in corpus order.
    pub fn reviews(&self) -> impl Iterator<Item = &Review> {
        self.items.iter().flat_map(|item| item.reviews.iter())
    }

    pub fn is_meta_prepended(&self) -> bool {
        self.meta_prepended
    }

    /// Returns a copy with each review text prefixed by its item's categories,
    /// `"Pizza, Salad. Great crust"`. Items without categories are unchanged.
    pub fn ppmd_transform(&self) -> Result<Corpus> {
        if self.meta_prepended {
            return Err(Error::AlreadyTransformed);
        }
        let mut out = self.clone();
        for item in &mut out.items {
            if item.categories.is_empty() {
                continue;
            }
            let prefix = item.categories.join(", ");
            for review in &mut item.reviews {
                review.text = format!("{prefix}. {}", review.text);
            }
        }
        out.meta_prepended = true;
        Ok(out.with_digest())
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for item in &self.items {
            serde_json::to_writer(&mut w, item)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Parses newline-delimited item records. Blank lines are skipped.
pub fn read_corpus<R: BufRead>(reader: R) -> Result<Corpus> {
    let mut items = Vec::new();
    let mut seen_items = HashSet::new();
    let mut seen_reviews = HashSet::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::io("<corpus>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawItem = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if !seen_items.insert(raw.item_id.clone()) {
            return Err(Error::DuplicateItem(raw.item_id));
        }
        let mut reviews = Vec::with_capacity(raw.reviews.len());
        for r in raw.reviews {
            if !(1..=5).contains(&r.rating) {
                return Err(Error::RatingOutOfRange {
                    review_id: r.review_id,
                    rating: r.rating,
                });
            }
            if !seen_reviews.insert(r.review_id.clone()) {
                return Err(Error::DuplicateReview(r.review_id));
            }
            if r.text.trim().is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("review {:?} has empty text", r.review_id),
                });
            }
            reviews.push(Review {
                review_id: r.review_id,
                item_id: raw.item_id.clone(),
                text: r.text,
                rating: r.rating as u8,
            });
        }
        if reviews.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("item {:?} has no reviews", raw.item_id),
            });
        }
        items.push(Item {
            item_id: raw.item_id,
            name: raw.name,
            categories: raw.categories,
            reviews,
        });
    }
    Corpus::new(items)
}

pub fn load_queries(path: impl AsRef<Path>) -> Result<Vec<Query>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_queries(BufReader::new(file))
}

pub fn read_queries<R: BufRead>(reader: R) -> Result<Vec<Query>> {
    let mut queries = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<queries>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let q: Query = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: n + 1,
            message: e.to_string(),
        })?;
        if q.text.trim().is_empty() {
            return Err(Error::Parse {
                line: n + 1,
                message: format!("query {:?} has empty text", q.query_id),
            });
        }
        if !seen.insert(q.query_id.clone()) {
            return Err(Error::DuplicateQuery(q.query_id));
        }
        queries.push(q);
    }
    Ok(queries)
}
