//! Fusion grid across seeds. Each seed is scored once and ranked for every
//! cell; seeds run in parallel and share nothing mutable.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;
use rir_core::fusion::write_run;
use rir_core::{
    aggregate, evaluate_run, load_qrels, load_queries, FusionMode, ItemRanking, MetricReport,
};

use crate::config::{required, ExperimentConfig};
use crate::pipeline::{self, read_corpus, Backend};

pub struct Cell {
    pub name: String,
    pub report: MetricReport,
}

fn cell_names(config: &ExperimentConfig) -> Vec<String> {
    match config.fusion.mode {
        FusionMode::Lf => config.sweep.k.iter().map(|k| format!("lf-k{k}")).collect(),
        FusionMode::Ef if config.fusion.train => vec!["ef-cefr".into()],
        FusionMode::Ef => vec!["ef".into()],
    }
}

/// Rankings of one seed, one entry per cell.
fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<Vec<Vec<ItemRanking>>> {
    let corpus = read_corpus(required(&config.corpus, "corpus")?, config.ppmd)?;
    let queries = load_queries(required(&config.queries, "queries")?)?;
    let backend = Backend::open(
        config.retrieval.as_ref().context("no retrieval backend")?,
        &corpus,
        seed,
    )?;
    match config.fusion.mode {
        FusionMode::Lf => pipeline::late_fusion(&backend, &corpus, &queries, &config.sweep.k),
        FusionMode::Ef => Ok(vec![pipeline::early_fusion(
            &backend, config, &corpus, &queries, seed,
        )?]),
    }
}

pub fn run(config: &ExperimentConfig, out_dir: &Path) -> Result<Vec<Cell>> {
    let seeds = config.seeds();
    let qrels_path = required(&config.qrels, "qrels")?;
    let qrels = load_qrels(qrels_path)
        .with_context(|| format!("loading qrels {}", qrels_path.display()))?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut snapshot = config.clone();
    snapshot.seeds = seeds.clone();
    snapshot.output_dir = Some(out_dir.to_path_buf());
    fs::write(out_dir.join("config.toml"), snapshot.to_toml()?)?;

    let per_seed: Vec<Vec<Vec<ItemRanking>>> = seeds
        .par_iter()
        .map(|&seed| run_seed(config, seed).with_context(|| format!("seed {seed}")))
        .collect::<Result<_>>()?;

    let names = cell_names(config);
    let mut cells = Vec::with_capacity(names.len());
    for (c, name) in names.into_iter().enumerate() {
        let dir = out_dir.join(&name);
        fs::create_dir_all(&dir)?;
        let mut metrics = Vec::with_capacity(seeds.len());
        for (rankings, &seed) in per_seed.iter().zip(&seeds) {
            let rankings = &rankings[c];
            let mut buf = Vec::new();
            write_run(rankings, &mut buf)?;
            fs::write(dir.join(format!("run-seed{seed}.jsonl")), buf)?;
            let run = pipeline::to_run(rankings.clone());
            metrics
                .push(evaluate_run(&run, &qrels).with_context(|| format!("{name}, seed {seed}"))?);
        }
        let report = aggregate(&metrics)?;
        let mut buf = Vec::new();
        report.write_jsonl(&mut buf)?;
        fs::write(dir.join("report.jsonl"), buf)?;
        cells.push(Cell { name, report });
    }
    Ok(cells)
}
