//! Query-review score lists grouped by item, the input to late fusion.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Review};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewScore {
    pub review_id: String,
    pub score: f64,
}

/// item_id -> that item's review scores, best first.
pub type ItemReviewScores = BTreeMap<String, Vec<ReviewScore>>;

/// Descending score, then ascending id. `total_cmp` keeps the order total.
pub(crate) fn by_score_desc(a_score: f64, a_id: &str, b_score: f64, b_id: &str) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_id.cmp(b_id))
}

pub fn sort_review_scores(scores: &mut [ReviewScore]) {
    scores.sort_by(|a, b| by_score_desc(a.score, &a.review_id, b.score, &b.review_id));
}

/// Scores every review of the corpus and groups the results per item.
pub fn group_by_item<F>(corpus: &Corpus, mut score: F) -> Result<ItemReviewScores>
where
    F: FnMut(&Review) -> Result<f64>,
{
    let mut out = ItemReviewScores::new();
    for item in corpus.items() {
        let mut list = item
            .reviews
            .iter()
            .map(|r| {
                Ok(ReviewScore {
                    review_id: r.review_id.clone(),
                    score: score(r)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        sort_review_scores(&mut list);
        out.insert(item.item_id.clone(), list);
    }
    Ok(out)
}
