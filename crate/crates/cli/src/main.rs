//! `rir`: reviewed-item retrieval from the command line.

mod config;
mod pipeline;
mod sweep;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rir_core::dense::StoreKind;
use rir_core::eval::RunMetrics;
use rir_core::fusion::{load_run, save_run};
use rir_core::sampling::{write_tuples, SpanBounds};
use rir_core::{
    aggregate, build_tuple_set, cefr_train, evaluate_run, load_qrels, load_queries, AnchorMode,
    FusionK, FusionMode, ItemEmbeddingTable, NegativeStrategy, PositiveStrategy, SparseIndex,
};

use config::{required, ExperimentConfig, Retrieval};
use pipeline::{read_corpus, read_store, Backend};

#[derive(Parser)]
#[command(
    name = "rir",
    version,
    about = "Reviewed-item retrieval: score items through their reviews"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check corpus, queries, qrels and embedding files, and print counts.
    Validate(ValidateArgs),
    /// Build the sparse index and save it.
    Index(IndexArgs),
    /// Export contrastive training tuples.
    Pairs(PairsArgs),
    /// Learn item vectors with contrastive early fusion.
    Cefr(CefrArgs),
    /// Rank items for every query and write a run file.
    Search(SearchArgs),
    /// Score run files against qrels; several runs are treated as seeds.
    Eval(EvalArgs),
    /// Run the fusion grid across seeds from a config file.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML). Flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::load_or_default(self.config.as_deref())?;
        if let Some(c) = &self.corpus {
            config.corpus = Some(c.clone());
        }
        Ok(config)
    }
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    queries: Option<PathBuf>,
    #[arg(long)]
    qrels: Option<PathBuf>,
    /// Review embeddings (RIRE).
    #[arg(long)]
    reviews: Option<PathBuf>,
    /// Query embeddings (RIRE).
    #[arg(long)]
    query_embeddings: Option<PathBuf>,
}

#[derive(Args)]
struct IndexArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    out: PathBuf,
    /// Index the corpus with item categories prepended to reviews.
    #[arg(long)]
    ppmd: bool,
}

#[derive(Args)]
struct PairsArgs {
    #[command(flatten)]
    common: Common,
    /// Review embeddings, needed by LS_* positives and IB_HN.
    #[arg(long)]
    reviews: Option<PathBuf>,
    /// SI, SI_SR, LS_SI, LS_SI_SR, ICT or IC.
    #[arg(long)]
    positive: Option<PositiveStrategy>,
    /// FULL, SASP or SASN.
    #[arg(long)]
    anchor: Option<AnchorMode>,
    /// IB or IB_HN.
    #[arg(long)]
    negatives: Option<NegativeStrategy>,
    #[arg(long)]
    per_item: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    span_min: Option<usize>,
    #[arg(long)]
    span_max: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CefrArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    reviews: Option<PathBuf>,
    /// Starting item table (RIRE, kind item); Average EF when omitted.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    per_item: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    no_early_stopping: bool,
    /// Learned item table (RIRE).
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch loss trace (JSON lines).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Bm25,
    Tfidf,
    Dense,
}

#[derive(Clone, Copy, ValueEnum)]
enum FusionArg {
    Lf,
    Ef,
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    queries: Option<PathBuf>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Prebuilt sparse index.
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    reviews: Option<PathBuf>,
    #[arg(long)]
    query_embeddings: Option<PathBuf>,
    #[arg(long, value_enum)]
    fusion: Option<FusionArg>,
    /// Reviews averaged per item: a positive integer or "all".
    #[arg(long)]
    k: Option<FusionK>,
    /// Item table for early fusion (RIRE); Average EF when omitted.
    #[arg(long)]
    items: Option<PathBuf>,
    /// Train CEFR item vectors before early fusion.
    #[arg(long)]
    train: bool,
    #[arg(long)]
    ppmd: bool,
    /// Seed for CEFR training and `{seed}` in embedding paths.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    qrels: Option<PathBuf>,
    /// Run file; repeat for several seeds.
    #[arg(long = "run", required = true)]
    runs: Vec<PathBuf>,
    /// Report as JSON lines.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate(a) => validate(a),
        Command::Index(a) => index(a),
        Command::Pairs(a) => pairs(a),
        Command::Cefr(a) => cefr(a),
        Command::Search(a) => search(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn override_path(slot: &mut Option<PathBuf>, flag: &Option<PathBuf>) {
    if let Some(p) = flag {
        *slot = Some(p.clone());
    }
}

fn validate(a: ValidateArgs) -> Result<()> {
    let mut config = a.common.load()?;
    override_path(&mut config.queries, &a.queries);
    override_path(&mut config.qrels, &a.qrels);
    let corpus = read_corpus(required(&config.corpus, "corpus")?, false)?;
    println!("items\t{}", corpus.n_items());
    println!("reviews\t{}", corpus.n_reviews());

    let queries = match &config.queries {
        Some(p) => {
            Some(load_queries(p).with_context(|| format!("loading queries {}", p.display()))?)
        }
        None => None,
    };
    if let Some(q) = &queries {
        println!("queries\t{}", q.len());
    }
    if let Some(p) = &config.qrels {
        let qrels = load_qrels(p).with_context(|| format!("loading qrels {}", p.display()))?;
        let judged: Vec<&str> = qrels.queries().collect();
        let mut relevant_pairs = 0;
        let mut without_relevant = 0;
        for q in &judged {
            let rel = qrels.relevant(q).expect("judged query");
            if rel.is_empty() {
                without_relevant += 1;
            }
            relevant_pairs += rel.len();
            if let Some(missing) = rel.iter().find(|i| corpus.item(i).is_none()) {
                bail!("qrels: query {q:?} marks unknown item {missing:?} relevant");
            }
            if let Some(qs) = &queries {
                if !qs.iter().any(|x| x.query_id == *q) {
                    bail!("qrels: query {q:?} is not in the queries file");
                }
            }
        }
        println!("judged queries\t{}", judged.len());
        println!("relevant pairs\t{relevant_pairs}");
        println!("queries without relevant items\t{without_relevant}");
    }

    let (mut reviews, mut query_vecs) = (a.reviews, a.query_embeddings);
    if let Some(Retrieval::Dense {
        reviews: r,
        queries: q,
    }) = &config.retrieval
    {
        reviews = reviews.or_else(|| Some(config::with_seed(r, config.seeds()[0])));
        query_vecs = query_vecs.or_else(|| Some(config::with_seed(q, config.seeds()[0])));
    }
    if let Some(p) = reviews {
        let store = read_store(&p, StoreKind::Review)?;
        for r in corpus.reviews() {
            store.require(&r.review_id)?;
        }
        println!("review embeddings\t{} x {}", store.len(), store.dim());
    }
    if let Some(p) = query_vecs {
        let store = read_store(&p, StoreKind::Query)?;
        if let Some(qs) = &queries {
            for q in qs {
                store.require(&q.query_id)?;
            }
        }
        println!("query embeddings\t{} x {}", store.len(), store.dim());
    }
    println!("ok");
    Ok(())
}

fn index(a: IndexArgs) -> Result<()> {
    let config = a.common.load()?;
    let corpus = read_corpus(required(&config.corpus, "corpus")?, a.ppmd || config.ppmd)?;
    let index = SparseIndex::build(&corpus)?;
    index.save(&a.out)?;
    println!(
        "indexed {} reviews, {} terms, mean length {:.2} -> {}",
        index.n_reviews(),
        index.vocabulary_size(),
        index.avg_len(),
        a.out.display()
    );
    Ok(())
}

fn pairs(a: PairsArgs) -> Result<()> {
    let config = a.common.load()?;
    let corpus = read_corpus(required(&config.corpus, "corpus")?, false)?;
    let mut s = config.sampling.clone();
    if let Some(v) = a.positive {
        s.positive_strategy = v;
    }
    if let Some(v) = a.anchor {
        s.anchor_mode = v;
    }
    if let Some(v) = a.negatives {
        s.negative_strategy = v;
    }
    if let Some(v) = a.per_item {
        s.per_item_count = v;
    }
    if let Some(v) = a.batch_size {
        s.batch_size = v;
    }
    s.span = SpanBounds {
        min: a.span_min.unwrap_or(s.span.min),
        max: a.span_max.unwrap_or(s.span.max),
    };
    if let Some(seed) = a.seed.or(config.seeds.first().copied()) {
        s.seed = seed;
    }
    let reviews_path = a.reviews.or_else(|| match &config.retrieval {
        Some(Retrieval::Dense { reviews, .. }) => Some(config::with_seed(reviews, s.seed)),
        _ => None,
    });
    let store = reviews_path
        .map(|p| read_store(&p, StoreKind::Review))
        .transpose()?;
    let set = build_tuple_set(&corpus, store.as_ref(), &s)?;
    let mut w = create(&a.out)?;
    write_tuples(&set.batches, &mut w)?;
    w.flush()?;
    let fallbacks = set
        .tuples()
        .filter(|t| t.provenance.fallback_from.is_some())
        .count();
    println!(
        "{} tuples in {} batches -> {}",
        set.n_tuples(),
        set.batches.len(),
        a.out.display()
    );
    if fallbacks > 0 {
        println!("{fallbacks} tuples fell back from {}", s.positive_strategy);
    }
    if !set.skipped_items.is_empty() {
        println!(
            "skipped items without eligible tuples: {}",
            set.skipped_items.join(", ")
        );
    }
    Ok(())
}

fn cefr(a: CefrArgs) -> Result<()> {
    let config = a.common.load()?;
    let corpus = read_corpus(required(&config.corpus, "corpus")?, false)?;
    let mut t = config.cefr.clone();
    if let Some(v) = a.lr {
        t.learning_rate = v;
    }
    if let Some(v) = a.epochs {
        t.epochs = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.per_item {
        t.per_item_count = v;
    }
    if let Some(seed) = a.seed.or(config.seeds.first().copied()) {
        t.seed = seed;
    }
    if a.no_early_stopping {
        t.early_stopping = None;
    }
    let reviews_path = a
        .reviews
        .or_else(|| match &config.retrieval {
            Some(Retrieval::Dense { reviews, .. }) => Some(config::with_seed(reviews, t.seed)),
            _ => None,
        })
        .context("no review embeddings given (--reviews or a dense retrieval section)")?;
    let store = read_store(&reviews_path, StoreKind::Review)?;
    let init = a
        .init
        .map(|p| -> Result<ItemEmbeddingTable> {
            Ok(ItemEmbeddingTable::from_store(
                &read_store(&p, StoreKind::Item)?,
                &corpus,
            )?)
        })
        .transpose()?;
    let out = cefr_train(&corpus, &store, &t, init)?;
    out.table.to_store()?.save(&a.out)?;
    if let Some(p) = &a.trace {
        let mut w = create(p)?;
        rir_core::cefr::write_loss_trace(&out.trace, &mut w)?;
    }
    match (out.trace.first(), out.trace.last()) {
        (Some(first), Some(last)) => println!(
            "{} epochs{}, mean loss {:.6} -> {:.6}; items -> {}",
            out.trace.len(),
            if out.stopped_early {
                " (stopped early)"
            } else {
                ""
            },
            first.mean_loss,
            last.mean_loss,
            a.out.display()
        ),
        _ => println!("0 epochs; Average EF items -> {}", a.out.display()),
    }
    Ok(())
}

/// Applies search flags on top of the config file.
fn search_config(a: &SearchArgs) -> Result<ExperimentConfig> {
    let mut config = a.common.load()?;
    override_path(&mut config.queries, &a.queries);
    if let Some(b) = a.backend {
        let (index, reviews, queries) = match &config.retrieval {
            Some(Retrieval::Bm25 { index } | Retrieval::Tfidf { index }) => {
                (index.clone(), None, None)
            }
            Some(Retrieval::Dense { reviews, queries }) => {
                (None, Some(reviews.clone()), Some(queries.clone()))
            }
            None => (None, None, None),
        };
        config.retrieval = Some(match b {
            BackendArg::Bm25 => Retrieval::Bm25 {
                index: a.index.clone().or(index),
            },
            BackendArg::Tfidf => Retrieval::Tfidf {
                index: a.index.clone().or(index),
            },
            BackendArg::Dense => Retrieval::Dense {
                reviews: a
                    .reviews
                    .clone()
                    .or(reviews)
                    .context("dense retrieval needs --reviews")?,
                queries: a
                    .query_embeddings
                    .clone()
                    .or(queries)
                    .context("dense retrieval needs --query-embeddings")?,
            },
        });
    } else {
        match &mut config.retrieval {
            Some(Retrieval::Bm25 { index } | Retrieval::Tfidf { index }) => {
                override_path(index, &a.index)
            }
            Some(Retrieval::Dense { reviews, queries }) => {
                if let Some(r) = &a.reviews {
                    *reviews = r.clone();
                }
                if let Some(q) = &a.query_embeddings {
                    *queries = q.clone();
                }
            }
            None => {}
        }
    }
    if let Some(f) = a.fusion {
        config.fusion.mode = match f {
            FusionArg::Lf => FusionMode::Lf,
            FusionArg::Ef => FusionMode::Ef,
        };
    }
    if let Some(k) = a.k {
        config.fusion.k = k;
    }
    override_path(&mut config.fusion.items, &a.items);
    config.fusion.train |= a.train;
    config.ppmd |= a.ppmd;
    if let Some(seed) = a.seed {
        config.seeds = vec![seed];
    }
    config.validate()?;
    Ok(config)
}

fn search(a: SearchArgs) -> Result<()> {
    let config = search_config(&a)?;
    let out = match (&a.out, &config.output_dir) {
        (Some(p), _) => p.clone(),
        (None, Some(dir)) => dir.join("run.jsonl"),
        (None, None) => bail!("no output given (--out or output_dir in the config)"),
    };
    let seed = config.seeds()[0];
    let corpus = read_corpus(required(&config.corpus, "corpus")?, config.ppmd)?;
    let queries_path = required(&config.queries, "queries")?;
    let queries = load_queries(queries_path)
        .with_context(|| format!("loading queries {}", queries_path.display()))?;
    let retrieval = config.retrieval.as_ref().expect("validated");
    let backend = Backend::open(retrieval, &corpus, seed)?;
    let rankings = match config.fusion.mode {
        FusionMode::Lf => {
            pipeline::late_fusion(&backend, &corpus, &queries, &[config.fusion.k])?.remove(0)
        }
        FusionMode::Ef => pipeline::early_fusion(&backend, &config, &corpus, &queries, seed)?,
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    save_run(&rankings, &out)?;
    println!(
        "{} queries ranked over {} items -> {}",
        rankings.len(),
        corpus.n_items(),
        out.display()
    );
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let mut config = a.common.load()?;
    override_path(&mut config.qrels, &a.qrels);
    let qrels_path = required(&config.qrels, "qrels")?;
    let qrels = load_qrels(qrels_path)
        .with_context(|| format!("loading qrels {}", qrels_path.display()))?;
    let metrics = a
        .runs
        .iter()
        .map(|p| -> Result<RunMetrics> {
            let run = load_run(p).with_context(|| format!("loading run {}", p.display()))?;
            evaluate_run(&run, &qrels).with_context(|| format!("evaluating {}", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let report = aggregate(&metrics)?;
    if let Some(p) = &a.out {
        let mut w = create(p)?;
        report.write_jsonl(&mut w)?;
    }
    print!("{report}");
    Ok(())
}

fn sweep_cmd(a: SweepArgs) -> Result<()> {
    let mut config = a.common.load()?;
    if a.common.config.is_none() {
        bail!("sweep needs --config");
    }
    if let Some(seeds) = a.seeds {
        config.seeds = seeds;
    }
    override_path(&mut config.output_dir, &a.out_dir);
    config.validate()?;
    let out_dir = required(&config.output_dir, "output directory")?.to_path_buf();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.threads.unwrap_or(0))
        .build()?;
    let cells = pool.install(|| sweep::run(&config, &out_dir))?;
    for cell in &cells {
        println!("== {} ==", cell.name);
        print!("{}", cell.report);
    }
    println!("outputs in {}", out_dir.display());
    Ok(())
}
