//! R-Precision, average precision and across-seed confidence intervals.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::fusion::RunEntry;

/// Two-sided confidence level of reported intervals.
pub const CONFIDENCE: f64 = 0.90;

/// query_id -> relevant item ids. Queries judged only non-relevant map to an empty set.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    judged: BTreeMap<String, BTreeSet<String>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, query_id: &str, item_id: &str, relevant: bool) {
        let set = self.judged.entry(query_id.to_string()).or_default();
        if relevant {
            set.insert(item_id.to_string());
        }
    }

    pub fn relevant(&self, query_id: &str) -> Option<&BTreeSet<String>> {
        self.judged.get(query_id)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.judged.keys().map(String::as_str)
    }
}

/// Tab-separated `query_id, item_id, relevance` with relevance 0 or 1.
pub fn read_qrels<R: BufRead>(reader: R) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<qrels>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let err = |message: String| Error::Parse {
            line: n + 1,
            message,
        };
        if fields.len() != 3 {
            return Err(err(format!(
                "expected 3 tab-separated fields, got {}",
                fields.len()
            )));
        }
        let relevant = match fields[2].trim() {
            "0" => false,
            "1" => true,
            other => return Err(err(format!("relevance must be 0 or 1, got {other:?}"))),
        };
        qrels.add(fields[0].trim(), fields[1].trim(), relevant);
    }
    Ok(qrels)
}

pub fn load_qrels(path: impl AsRef<Path>) -> Result<Qrels> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_qrels(BufReader::new(file))
}

fn check_relevant(relevant: &BTreeSet<String>) -> Result<()> {
    if relevant.is_empty() {
        return Err(Error::NoRelevant(String::new()));
    }
    Ok(())
}

/// Fraction of the top `R` that is relevant, `R = |relevant|`.
pub fn r_precision<S: AsRef<str>>(ranking: &[S], relevant: &BTreeSet<String>) -> Result<f64> {
    check_relevant(relevant)?;
    let r = relevant.len();
    let hits = ranking
        .iter()
        .take(r)
        .filter(|id| relevant.contains(id.as_ref()))
        .count();
    Ok(hits as f64 / r as f64)
}

/// Mean of precision@k over the ranks k of relevant items; unretrieved relevant items add 0.
pub fn average_precision<S: AsRef<str>>(ranking: &[S], relevant: &BTreeSet<String>) -> Result<f64> {
    check_relevant(relevant)?;
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, id) in ranking.iter().enumerate() {
        if relevant.contains(id.as_ref()) {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(sum / relevant.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub query_id: String,
    pub ap: f64,
    pub r_prec: f64,
}

/// Metrics of one run (one seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub per_query: Vec<QueryMetrics>,
    pub map: f64,
    pub r_prec: f64,
    /// Queries left out of the means because no item is relevant.
    pub excluded: Vec<String>,
}

/// Scores a run against qrels. Every ranking must list the same items, each
/// once, and include every relevant item of its query.
pub fn evaluate_run(run: &[RunEntry], qrels: &Qrels) -> Result<RunMetrics> {
    let mut universe: Option<HashSet<&str>> = None;
    let mut per_query = Vec::new();
    let mut excluded = Vec::new();
    let mut in_run = HashSet::new();
    for entry in run {
        in_run.insert(entry.query_id.as_str());
        let ids: Vec<&str> = entry.ranking.iter().map(|r| r.item_id.as_str()).collect();
        let set: HashSet<&str> = ids.iter().copied().collect();
        let partial = |detail: String| Error::PartialRanking {
            query_id: entry.query_id.clone(),
            detail,
        };
        if set.len() != ids.len() {
            return Err(partial("an item appears more than once".into()));
        }
        match &universe {
            None => universe = Some(set.clone()),
            Some(u) if *u != set => {
                return Err(partial("ranked items differ from other queries".into()))
            }
            Some(_) => {}
        }
        let relevant = match qrels.relevant(&entry.query_id) {
            Some(r) if !r.is_empty() => r,
            _ => {
                excluded.push(entry.query_id.clone());
                continue;
            }
        };
        if let Some(missing) = relevant.iter().find(|id| !set.contains(id.as_str())) {
            return Err(partial(format!("relevant item {missing:?} not ranked")));
        }
        per_query.push(QueryMetrics {
            query_id: entry.query_id.clone(),
            ap: average_precision(&ids, relevant)?,
            r_prec: r_precision(&ids, relevant)?,
        });
    }
    for q in qrels.queries() {
        let has_relevant = qrels.relevant(q).is_some_and(|r| !r.is_empty());
        if has_relevant && !in_run.contains(q) {
            return Err(Error::PartialRanking {
                query_id: q.to_string(),
                detail: "query missing from run".into(),
            });
        }
    }
    per_query.sort_by(|a, b| a.query_id.cmp(&b.query_id));
    excluded.sort();
    let n = per_query.len().max(1) as f64;
    Ok(RunMetrics {
        map: per_query.iter().map(|q| q.ap).sum::<f64>() / n,
        r_prec: per_query.iter().map(|q| q.r_prec).sum::<f64>() / n,
        per_query,
        excluded,
    })
}

/// Mean with a two-sided Student-t half-width; `None` for a single sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub half_width: Option<f64>,
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.half_width {
            Some(h) => write!(f, "{:.3} ± {:.3}", self.mean, h),
            None => write!(f, "{:.3}", self.mean),
        }
    }
}

/// t quantile for a two-sided interval at `confidence` with `df` degrees of freedom.
pub fn t_critical(confidence: f64, df: usize) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df > 0");
    dist.inverse_cdf(0.5 + confidence / 2.0)
}

pub fn interval(samples: &[f64]) -> Interval {
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return Interval {
            mean,
            half_width: None,
        };
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let half = t_critical(CONFIDENCE, n - 1) * var.sqrt() / (n as f64).sqrt();
    Interval {
        mean,
        half_width: Some(half),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n_seeds: usize,
    pub map: Interval,
    pub r_prec: Interval,
    pub per_seed: Vec<RunMetrics>,
    /// Per-query metrics averaged over seeds.
    pub per_query: Vec<QueryMetrics>,
    pub excluded: Vec<String>,
}

/// Across-seed means and intervals. All runs must evaluate the same queries.
pub fn aggregate(runs: &[RunMetrics]) -> Result<MetricReport> {
    let first = runs.first().ok_or(Error::NoRuns)?;
    let key = |r: &RunMetrics| -> Vec<String> {
        r.per_query.iter().map(|q| q.query_id.clone()).collect()
    };
    let queries = key(first);
    if runs
        .iter()
        .any(|r| key(r) != queries || r.excluded != first.excluded)
    {
        return Err(Error::MismatchedQueries);
    }
    let n = runs.len() as f64;
    let per_query = queries
        .iter()
        .enumerate()
        .map(|(i, q)| QueryMetrics {
            query_id: q.clone(),
            ap: runs.iter().map(|r| r.per_query[i].ap).sum::<f64>() / n,
            r_prec: runs.iter().map(|r| r.per_query[i].r_prec).sum::<f64>() / n,
        })
        .collect();
    let maps: Vec<f64> = runs.iter().map(|r| r.map).collect();
    let rps: Vec<f64> = runs.iter().map(|r| r.r_prec).collect();
    Ok(MetricReport {
        n_seeds: runs.len(),
        map: interval(&maps),
        r_prec: interval(&rps),
        per_seed: runs.to_vec(),
        per_query,
        excluded: first.excluded.clone(),
    })
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ReportLine<'a> {
    Summary {
        metric: &'a str,
        mean: f64,
        half_width: Option<f64>,
        confidence: f64,
        n_seeds: usize,
        per_seed: Vec<f64>,
    },
    Query(&'a QueryMetrics),
    Excluded {
        query_id: &'a str,
    },
}

impl MetricReport {
    /// Line-delimited records: two summaries, then per-query means, then exclusions.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut lines = vec![
            ReportLine::Summary {
                metric: "R-Prec",
                mean: self.r_prec.mean,
                half_width: self.r_prec.half_width,
                confidence: CONFIDENCE,
                n_seeds: self.n_seeds,
                per_seed: self.per_seed.iter().map(|r| r.r_prec).collect(),
            },
            ReportLine::Summary {
                metric: "MAP",
                mean: self.map.mean,
                half_width: self.map.half_width,
                confidence: CONFIDENCE,
                n_seeds: self.n_seeds,
                per_seed: self.per_seed.iter().map(|r| r.map).collect(),
            },
        ];
        lines.extend(self.per_query.iter().map(ReportLine::Query));
        lines.extend(
            self.excluded
                .iter()
                .map(|q| ReportLine::Excluded { query_id: q }),
        );
        for line in &lines {
            serde_json::to_writer(&mut w, line)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<8} {:>16}   (n_seeds = {}, {:.0}% CI)",
            "metric",
            "value",
            self.n_seeds,
            CONFIDENCE * 100.0
        )?;
        writeln!(f, "{:<8} {:>16}", "R-Prec", self.r_prec.to_string())?;
        writeln!(f, "{:<8} {:>16}", "MAP", self.map.to_string())?;
        writeln!(f, "queries evaluated: {}", self.per_query.len())?;
        if !self.excluded.is_empty() {
            writeln!(
                f,
                "excluded (no relevant items): {}",
                self.excluded.join(", ")
            )?;
        }
        Ok(())
    }
}
