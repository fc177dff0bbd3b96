//! TF-IDF and BM25 query-review scoring.
//!
//! Text is lowercased, split on anything that is not alphanumeric or an
//! apostrophe, filtered through a fixed English stopword list and stemmed with
//! the Snowball English (Porter2) stemmer.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::sync::OnceLock;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Query};
use crate::error::{Error, Result};
use crate::scoring::{group_by_item, ItemReviewScores};

const STOPWORD_LIST: &str = include_str!("stopwords.txt");

fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORD_LIST
            .lines()
            .map(str::trim)
            .filter(|w| !w.is_empty())
            .collect()
    })
}

fn stemmer() -> &'static Stemmer {
    static STEMMER: OnceLock<Stemmer> = OnceLock::new();
    STEMMER.get_or_init(|| Stemmer::create(Algorithm::English))
}

pub fn is_stopword(word: &str) -> bool {
    stopwords().contains(word)
}

pub fn tokenize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase().replace('\u{2019}', "'");
    lowered
        .split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .map(|w| w.trim_matches('\''))
        .filter(|w| !w.is_empty() && !is_stopword(w))
        .map(|w| stemmer().stem(w).into_owned())
        .filter(|w| !w.is_empty())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.6, b: 0.75 }
    }
}

/// Which sparse ranking function to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SparseModel {
    Tfidf,
    Bm25,
}

/// A query reduced to in-vocabulary term ids with their counts.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryTerms {
    terms: Vec<(u32, u32)>,
}

impl QueryTerms {
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

#[derive(Serialize, Deserialize)]
struct IndexFile {
    terms: Vec<String>,
    review_ids: Vec<String>,
    doc_terms: Vec<Vec<(u32, u32)>>,
    params: Bm25Params,
    corpus_digest: u64,
}

/// Immutable sparse index over one corpus snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseIndex {
    terms: Vec<String>,
    vocabulary: HashMap<String, u32>,
    df: Vec<u32>,
    review_ids: Vec<String>,
    review_index: HashMap<String, usize>,
    // sorted by term id
    doc_terms: Vec<Vec<(u32, u32)>>,
    doc_len: Vec<u32>,
    avg_len: f64,
    // term id -> (doc, tf), docs ascending
    postings: Vec<Vec<(u32, u32)>>,
    tfidf_norm: Vec<f64>,
    params: Bm25Params,
    corpus_digest: u64,
}

impl SparseIndex {
    pub fn build(corpus: &Corpus) -> Result<Self> {
        Self::build_with(corpus, Bm25Params::default())
    }

    pub fn build_with(corpus: &Corpus, params: Bm25Params) -> Result<Self> {
        if corpus.n_reviews() == 0 {
            return Err(Error::EmptyCorpus);
        }
        let mut terms = Vec::new();
        let mut vocabulary = HashMap::new();
        let mut review_ids = Vec::with_capacity(corpus.n_reviews());
        let mut doc_terms = Vec::with_capacity(corpus.n_reviews());
        for review in corpus.reviews() {
            let mut counts: HashMap<u32, u32> = HashMap::new();
            for tok in tokenize(&review.text) {
                let next = terms.len() as u32;
                let id = *vocabulary.entry(tok.clone()).or_insert_with(|| {
                    terms.push(tok);
                    next
                });
                *counts.entry(id).or_default() += 1;
            }
            let mut v: Vec<(u32, u32)> = counts.into_iter().collect();
            v.sort_unstable();
            review_ids.push(review.review_id.clone());
            doc_terms.push(v);
        }
        Ok(Self::assemble(
            terms,
            review_ids,
            doc_terms,
            params,
            corpus.text_digest(),
        ))
    }

    fn assemble(
        terms: Vec<String>,
        review_ids: Vec<String>,
        doc_terms: Vec<Vec<(u32, u32)>>,
        params: Bm25Params,
        corpus_digest: u64,
    ) -> Self {
        let vocabulary = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let review_index = review_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        let mut df = vec![0u32; terms.len()];
        let mut postings = vec![Vec::new(); terms.len()];
        let mut doc_len = Vec::with_capacity(doc_terms.len());
        for (d, doc) in doc_terms.iter().enumerate() {
            let mut len = 0;
            for &(t, tf) in doc {
                df[t as usize] += 1;
                postings[t as usize].push((d as u32, tf));
                len += tf;
            }
            doc_len.push(len);
        }
        let n = doc_terms.len();
        let avg_len = doc_len.iter().map(|&l| l as f64).sum::<f64>() / n as f64;
        let mut index = SparseIndex {
            terms,
            vocabulary,
            df,
            review_ids,
            review_index,
            doc_terms,
            doc_len,
            avg_len,
            postings,
            tfidf_norm: Vec::new(),
            params,
            corpus_digest,
        };
        index.tfidf_norm = index
            .doc_terms
            .iter()
            .map(|doc| {
                doc.iter()
                    .map(|&(t, tf)| index.ltc_weight(t, tf).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        index
    }

    pub fn n_reviews(&self) -> usize {
        self.review_ids.len()
    }

    pub fn vocabulary_size(&self) -> usize {
        self.terms.len()
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn df(&self, term: &str) -> u32 {
        self.vocabulary
            .get(term)
            .map_or(0, |&t| self.df[t as usize])
    }

    pub fn review_len(&self, review_id: &str) -> Option<u32> {
        self.review_index.get(review_id).map(|&d| self.doc_len[d])
    }

    /// True if the index was built from exactly this corpus' reviews in order.
    pub fn matches(&self, corpus: &Corpus) -> bool {
        self.corpus_digest == corpus.text_digest()
            && self.review_ids.len() == corpus.n_reviews()
            && self
                .review_ids
                .iter()
                .zip(corpus.reviews())
                .all(|(a, r)| *a == r.review_id)
    }

    /// Tokenizes and keeps in-vocabulary terms; out-of-vocabulary terms score 0.
    pub fn analyze(&self, text: &str) -> QueryTerms {
        let mut counts: HashMap<u32, u32> = HashMap::new();
        for tok in tokenize(text) {
            if let Some(&t) = self.vocabulary.get(&tok) {
                *counts.entry(t).or_default() += 1;
            }
        }
        let mut terms: Vec<_> = counts.into_iter().collect();
        terms.sort_unstable();
        QueryTerms { terms }
    }

    fn doc(&self, review_id: &str) -> Result<usize> {
        self.review_index
            .get(review_id)
            .copied()
            .ok_or_else(|| Error::UnknownReview(review_id.to_string()))
    }

    fn tf_in(&self, doc: usize, term: u32) -> u32 {
        let terms = &self.doc_terms[doc];
        terms
            .binary_search_by_key(&term, |&(t, _)| t)
            .map_or(0, |i| terms[i].1)
    }

    fn bm25_idf(&self, term: u32) -> f64 {
        let n = self.n_reviews() as f64;
        let df = self.df[term as usize] as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn bm25_term(&self, term: u32, tf: u32, doc: usize) -> f64 {
        if tf == 0 {
            return 0.0;
        }
        let Bm25Params { k1, b } = self.params;
        let tf = tf as f64;
        let len_norm = 1.0 - b + b * self.doc_len[doc] as f64 / self.avg_len;
        self.bm25_idf(term) * tf * (k1 + 1.0) / (tf + k1 * len_norm)
    }

    fn tfidf_idf(&self, term: u32) -> f64 {
        (self.n_reviews() as f64 / self.df[term as usize] as f64).ln()
    }

    fn ltc_weight(&self, term: u32, tf: u32) -> f64 {
        if tf == 0 {
            return 0.0;
        }
        (1.0 + (tf as f64).ln()) * self.tfidf_idf(term)
    }

    /// BM25 over the distinct query terms.
    pub fn bm25(&self, query: &QueryTerms, review_id: &str) -> Result<f64> {
        let doc = self.doc(review_id)?;
        Ok(query
            .terms
            .iter()
            .map(|&(t, _)| self.bm25_term(t, self.tf_in(doc, t), doc))
            .sum())
    }

    fn query_ltc(&self, query: &QueryTerms) -> (Vec<(u32, f64)>, f64) {
        let weights: Vec<(u32, f64)> = query
            .terms
            .iter()
            .map(|&(t, qtf)| (t, self.ltc_weight(t, qtf)))
            .collect();
        let norm = weights.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        (weights, norm)
    }

    fn tfidf_doc(&self, weights: &[(u32, f64)], qnorm: f64, doc: usize) -> f64 {
        let dnorm = self.tfidf_norm[doc];
        if qnorm == 0.0 || dnorm == 0.0 {
            return 0.0;
        }
        let dot: f64 = weights
            .iter()
            .map(|&(t, wq)| wq * self.ltc_weight(t, self.tf_in(doc, t)))
            .sum();
        (dot / (qnorm * dnorm)).clamp(0.0, 1.0)
    }

    /// Cosine between ltc-weighted query and review vectors.
    pub fn tfidf(&self, query: &QueryTerms, review_id: &str) -> Result<f64> {
        let doc = self.doc(review_id)?;
        let (weights, qnorm) = self.query_ltc(query);
        Ok(self.tfidf_doc(&weights, qnorm, doc))
    }

    pub fn bm25_score(&self, query: &Query, review_id: &str) -> Result<f64> {
        self.bm25(&self.analyze(&query.text), review_id)
    }

    pub fn tfidf_score(&self, query: &Query, review_id: &str) -> Result<f64> {
        self.tfidf(&self.analyze(&query.text), review_id)
    }

    /// Scores every review, in index order, walking the postings of the query terms.
    pub fn score_all(&self, model: SparseModel, query: &QueryTerms) -> Vec<f64> {
        let mut scores = vec![0.0; self.n_reviews()];
        match model {
            SparseModel::Bm25 => {
                for &(t, _) in &query.terms {
                    for &(d, tf) in &self.postings[t as usize] {
                        scores[d as usize] += self.bm25_term(t, tf, d as usize);
                    }
                }
            }
            SparseModel::Tfidf => {
                let (weights, qnorm) = self.query_ltc(query);
                if qnorm == 0.0 {
                    return scores;
                }
                for &(t, wq) in &weights {
                    for &(d, tf) in &self.postings[t as usize] {
                        scores[d as usize] += wq * self.ltc_weight(t, tf);
                    }
                }
                for (d, s) in scores.iter_mut().enumerate() {
                    let dnorm = self.tfidf_norm[d];
                    *s = if dnorm == 0.0 {
                        0.0
                    } else {
                        (*s / (qnorm * dnorm)).clamp(0.0, 1.0)
                    };
                }
            }
        }
        scores
    }

    /// Per-item review scores for a query, ready for late fusion.
    pub fn score_reviews(
        &self,
        model: SparseModel,
        query_text: &str,
        corpus: &Corpus,
    ) -> Result<ItemReviewScores> {
        if !self.matches(corpus) {
            return Err(Error::Config(
                "sparse index was built from a different corpus".into(),
            ));
        }
        let scores = self.score_all(model, &self.analyze(query_text));
        let mut next = 0;
        group_by_item(corpus, |_| {
            next += 1;
            Ok(scores[next - 1])
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let data = IndexFile {
            terms: self.terms.clone(),
            review_ids: self.review_ids.clone(),
            doc_terms: self.doc_terms.clone(),
            params: self.params,
            corpus_digest: self.corpus_digest,
        };
        serde_json::to_writer(BufWriter::new(file), &data).map_err(|e| Error::io(path, e.into()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let data: IndexFile =
            serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::io(path, e.into()))?;
        if data.review_ids.is_empty() || data.review_ids.len() != data.doc_terms.len() {
            return Err(Error::InvalidRecord("corrupt sparse index".into()));
        }
        if data
            .doc_terms
            .iter()
            .flatten()
            .any(|&(t, _)| t as usize >= data.terms.len())
        {
            return Err(Error::InvalidRecord("corrupt sparse index".into()));
        }
        Ok(Self::assemble(
            data.terms,
            data.review_ids,
            data.doc_terms,
            data.params,
            data.corpus_digest,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::read_corpus;

    fn toy_text() -> &'static str {
        r#"{"item_id":"a","reviews":[{"review_id":"d1","text":"red fish","rating":5},{"review_id":"d2","text":"red red wine","rating":4}]}
{"item_id":"b","reviews":[{"review_id":"d3","text":"blue sky","rating":3}]}"#
    }

    fn toy() -> Corpus {
        read_corpus(toy_text().as_bytes()).unwrap()
    }

    fn q(text: &str) -> Query {
        Query {
            query_id: "q".into(),
            text: text.into(),
            category: None,
        }
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("The pizzas were great!"), vec!["pizza", "great"]);
        assert!(tokenize("").is_empty());
        assert!(tokenize("THE the The").is_empty());
        assert_eq!(tokenize("Don't  go—it's bad"), vec!["go", "bad"]);
    }

    #[test]
    fn index_stats() {
        let idx = SparseIndex::build(&toy()).unwrap();
        assert_eq!(idx.df("red"), 2);
        assert_eq!(idx.df("nothing"), 0);
        assert!((idx.avg_len() - 7.0 / 3.0).abs() < 1e-15);
        assert_eq!(idx.review_len("d2"), Some(3));
        assert_eq!(idx, SparseIndex::build(&toy()).unwrap());
    }

    #[test]
    fn bm25_toy() {
        let idx = SparseIndex::build(&toy()).unwrap();
        let red = q("red");
        assert_eq!(idx.bm25_score(&red, "d3").unwrap(), 0.0);
        // ln(1.6) * 2.6 / (1 + 1.6 * (0.25 + 0.75 * 2 / (7/3)))
        let d1 = idx.bm25_score(&red, "d1").unwrap();
        assert!((d1 - 0.503_180_356_0).abs() < 1e-9, "{d1}");
        // Two occurrences outweigh the longer length here.
        let d2 = idx.bm25_score(&red, "d2").unwrap();
        assert!((d2 - 0.619_859_858_9).abs() < 1e-9, "{d2}");
        assert!(d2 > d1);
        assert!(matches!(
            idx.bm25_score(&red, "zz"),
            Err(Error::UnknownReview(_))
        ));
    }

    #[test]
    fn tfidf_toy() {
        let idx = SparseIndex::build(&toy()).unwrap();
        let red = q("red");
        assert_eq!(idx.tfidf_score(&red, "d3").unwrap(), 0.0);
        let d1 = idx.tfidf_score(&red, "d1").unwrap();
        let d2 = idx.tfidf_score(&red, "d2").unwrap();
        assert!((d1 - 0.346_241_553_1).abs() < 1e-9, "{d1}");
        assert!((d2 - 0.529_932_008_2).abs() < 1e-9, "{d2}");
        let own = idx.tfidf_score(&q("red red wine"), "d2").unwrap();
        assert!((own - 1.0).abs() < 1e-12);
    }

    #[test]
    fn score_all_agrees_with_pointwise() {
        let c = toy();
        let idx = SparseIndex::build(&c).unwrap();
        for text in ["red", "red wine sky", "blue fish fish", "nothing"] {
            let qt = idx.analyze(text);
            for model in [SparseModel::Bm25, SparseModel::Tfidf] {
                let all = idx.score_all(model, &qt);
                for (d, r) in c.reviews().enumerate() {
                    let one = match model {
                        SparseModel::Bm25 => idx.bm25(&qt, &r.review_id).unwrap(),
                        SparseModel::Tfidf => idx.tfidf(&qt, &r.review_id).unwrap(),
                    };
                    assert!((all[d] - one).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn save_load() {
        let idx = SparseIndex::build(&toy()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("idx.json");
        idx.save(&p).unwrap();
        assert_eq!(SparseIndex::load(&p).unwrap(), idx);
    }

    #[test]
    fn rejects_other_corpus() {
        let idx = SparseIndex::build(&toy()).unwrap();
        let other = read_corpus(
            r#"{"item_id":"x","reviews":[{"review_id":"z","text":"red","rating":1}]}"#.as_bytes(),
        )
        .unwrap();
        assert!(idx.score_reviews(SparseModel::Bm25, "red", &other).is_err());
        let edited = read_corpus(toy_text().replace("blue sky", "grey sky").as_bytes()).unwrap();
        assert!(!idx.matches(&edited));
        assert!(idx.matches(&toy()));
    }
}
