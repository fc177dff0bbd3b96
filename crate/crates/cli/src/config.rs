//! Experiment configuration file (TOML). Command-line flags override it.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rir_core::{FusionK, FusionMode, SamplingConfig, SparseModel, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub seeds: Vec<u64>,
    /// Prepend item categories to review text before scoring.
    pub ppmd: bool,
    pub retrieval: Option<Retrieval>,
    pub fusion: FusionSection,
    pub sampling: SamplingConfig,
    pub cefr: TrainConfig,
    pub sweep: SweepSection,
}

/// Exactly one backend per run. Embedding paths may contain `{seed}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "lowercase", deny_unknown_fields)]
pub enum Retrieval {
    Bm25 {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        index: Option<PathBuf>,
    },
    Tfidf {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        index: Option<PathBuf>,
    },
    Dense {
        reviews: PathBuf,
        queries: PathBuf,
    },
}

impl Retrieval {
    pub fn sparse_model(&self) -> Option<SparseModel> {
        match self {
            Retrieval::Bm25 { .. } => Some(SparseModel::Bm25),
            Retrieval::Tfidf { .. } => Some(SparseModel::Tfidf),
            Retrieval::Dense { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSection {
    pub mode: FusionMode,
    pub k: FusionK,
    /// Item table for early fusion; Average EF when absent.
    pub items: Option<PathBuf>,
    /// Train CEFR item vectors per seed instead of reading `items`.
    pub train: bool,
}

impl Default for FusionSection {
    fn default() -> Self {
        FusionSection {
            mode: FusionMode::Lf,
            k: FusionK::All,
            items: None,
            train: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub k: Vec<FusionK>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            k: vec![
                FusionK::top(1).unwrap(),
                FusionK::top(10).unwrap(),
                FusionK::All,
            ],
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut config: Self =
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = std::path::absolute(path.parent().unwrap_or(Path::new(".")))
            .with_context(|| format!("resolving {}", path.display()))?;
        config.resolve_paths(&base);
        Ok(config)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    /// Relative paths in a config file are taken relative to that file's directory.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.corpus,
            &mut self.queries,
            &mut self.qrels,
            &mut self.output_dir,
            &mut self.fusion.items,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        match &mut self.retrieval {
            Some(Retrieval::Bm25 { index: Some(p) } | Retrieval::Tfidf { index: Some(p) }) => {
                fix(p)
            }
            Some(Retrieval::Dense { reviews, queries }) => {
                fix(reviews);
                fix(queries);
            }
            _ => {}
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![0]
        } else {
            self.seeds.clone()
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let retrieval = self
            .retrieval
            .as_ref()
            .context("no retrieval backend configured")?;
        if self.fusion.mode == FusionMode::Ef {
            if retrieval.sparse_model().is_some() {
                bail!("early fusion needs the dense backend");
            }
            if self.fusion.train && self.fusion.items.is_some() {
                bail!("fusion.items and fusion.train are mutually exclusive");
            }
        }
        if self.ppmd && retrieval.sparse_model().is_none() {
            bail!("ppmd changes review text; for dense retrieval embed the transformed corpus instead");
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = self.seeds.iter().find(|s| !seen.insert(**s)) {
            bail!("seed {dup} listed twice");
        }
        Ok(())
    }
}

/// Replaces `{seed}` in a path.
pub fn with_seed(path: &Path, seed: u64) -> PathBuf {
    PathBuf::from(path.to_string_lossy().replace("{seed}", &seed.to_string()))
}

pub fn required<'a>(value: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .with_context(|| format!("no {what} given (flag or config file)"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let text = r#"
            corpus = "corpus.jsonl"
            seeds = [1, 2]
            [retrieval]
            backend = "dense"
            reviews = "/abs/reviews-{seed}.rire"
            queries = "q.rire"
            [fusion]
            mode = "ef"
            train = true
            [cefr]
            learning_rate = 0.001
            [sweep]
            k = [1, "all"]
        "#;
        let mut c: ExperimentConfig = toml::from_str(text).unwrap();
        c.resolve_paths(Path::new("/base"));
        assert_eq!(c.corpus.as_deref(), Some(Path::new("/base/corpus.jsonl")));
        assert_eq!(c.cefr.learning_rate, 0.001);
        assert_eq!(c.cefr.batch_size, 48);
        assert_eq!(c.sweep.k, vec![FusionK::top(1).unwrap(), FusionK::All]);
        let Some(Retrieval::Dense { reviews, queries }) = &c.retrieval else {
            panic!()
        };
        assert_eq!(with_seed(reviews, 2), Path::new("/abs/reviews-2.rire"));
        assert_eq!(queries, Path::new("/base/q.rire"));
        c.validate().unwrap();
        let back: ExperimentConfig = toml::from_str(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(toml::from_str::<ExperimentConfig>("corpse = \"x\"").is_err());
        let c: ExperimentConfig =
            toml::from_str("[retrieval]\nbackend = \"bm25\"\n[fusion]\nmode = \"ef\"").unwrap();
        assert!(c.validate().is_err());
        let c: ExperimentConfig =
            toml::from_str("seeds = [1, 1]\n[retrieval]\nbackend = \"tfidf\"").unwrap();
        assert!(c.validate().is_err());
    }
}
