use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use log::info;
use serde::Serialize;

use rumorstance_core::corpus::{
    label_counts, load_rumoreval, make_fixture_corpus, published_counts, read_corpus, validate_counts, write_corpus,
    CountReport, IngestReport,
};
use rumorstance_core::features::{embedding_vocabulary, EmbeddingTable, LexiconSet};
use rumorstance_core::matrix_file::{write_matrix, FeatureStore, FEATURE_MAGIC};
use rumorstance_core::{Dataset, Split, Vocabulary};

use crate::paths::{report_path, vocab_path};
use crate::usage;

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// RumorEval 2019 directory (key files plus one directory per thread).
    #[arg(long, conflicts_with = "fixture", required_unless_present = "fixture")]
    data: Option<PathBuf>,
    /// Output corpus file. The vocabulary and report are written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Build a synthetic corpus with this many threads per split instead.
    #[arg(long)]
    fixture: Option<usize>,
    /// Seed for the synthetic corpus (train, dev and test use seed, seed+1
    /// and seed+2).
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Maximum posts per synthetic thread.
    #[arg(long, default_value_t = 6)]
    max_posts: usize,
    /// Minimum training-split frequency for a word to enter the vocabulary.
    #[arg(long, default_value_t = 1)]
    min_count: usize,
    /// Maximum number of whole words in the vocabulary.
    #[arg(long, default_value_t = 30_000)]
    max_words: usize,
}

#[derive(Debug, Serialize)]
struct SplitSummary {
    threads: usize,
    posts: usize,
    labels: BTreeMap<String, usize>,
}

#[derive(Debug, Serialize)]
struct PrepareReport {
    source: &'static str,
    splits: BTreeMap<String, SplitSummary>,
    vocab_size: usize,
    vocab_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    ingest: Option<IngestReport>,
    /// Published corpus statistics against what was ingested.
    #[serde(skip_serializing_if = "Option::is_none")]
    table_checks: Option<BTreeMap<String, CountReport>>,
}

fn write_json<T: Serialize>(path: &std::path::Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn prepare(a: PrepareArgs) -> Result<()> {
    let (datasets, ingest, source) = match (&a.data, a.fixture) {
        (_, Some(n)) => {
            if n == 0 || a.max_posts == 0 {
                return Err(usage("--fixture and --max-posts must be at least 1"));
            }
            let sets = [Split::Train, Split::Dev, Split::Test]
                .into_iter()
                .enumerate()
                .map(|(i, split)| {
                    let mut d = make_fixture_corpus(a.seed + i as u64, n, a.max_posts);
                    d.split = split;
                    d
                })
                .collect::<Vec<Dataset>>();
            (sets, None, "fixture")
        }
        (Some(dir), None) => {
            let ingest = load_rumoreval(dir)?;
            let sets = ingest.datasets.into_values().collect();
            (sets, Some(ingest.report), "rumoreval")
        }
        (None, None) => return Err(usage("either --data or --fixture is required")),
    };

    let train =
        datasets.iter().find(|d| d.split == Split::Train).ok_or_else(|| usage("the corpus has no training split"))?;
    let vocab = Vocabulary::from_dataset(train, a.min_count, a.max_words);

    let table_checks = ingest.as_ref().map(|_| {
        let pick = |splits: &[Split]| datasets.iter().filter(|d| splits.contains(&d.split)).collect::<Vec<_>>();
        let train_dev = pick(&[Split::Train, Split::Dev]);
        let test = pick(&[Split::Test]);
        BTreeMap::from([
            ("task_a_train".to_string(), validate_counts(train_dev.iter().copied(), &published_counts::task_a_train())),
            ("task_a_test".to_string(), validate_counts(test.iter().copied(), &published_counts::task_a_test())),
            ("task_b_train".to_string(), validate_counts(train_dev.iter().copied(), &published_counts::task_b_train())),
            ("task_b_test".to_string(), validate_counts(test.iter().copied(), &published_counts::task_b_test())),
        ])
    });
    let report = PrepareReport {
        source,
        splits: datasets
            .iter()
            .map(|d| {
                let s = SplitSummary { threads: d.threads.len(), posts: d.n_posts(), labels: label_counts([d]) };
                (d.split.name().to_string(), s)
            })
            .collect(),
        vocab_size: vocab.len(),
        vocab_hash: vocab.hash(),
        ingest,
        table_checks,
    };

    write_corpus(&a.out, &datasets)?;
    vocab.save(&vocab_path(&a.out))?;
    write_json(&report_path(&a.out), &report)?;
    for (name, s) in &report.splits {
        info!("{name}: {} threads, {} posts", s.threads, s.posts);
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ResourcesArgs {
    /// Corpus file whose words receive synthetic vectors.
    #[arg(long)]
    data: PathBuf,
    /// Output directory; gets `lexicons/` and `embeddings.txt`.
    #[arg(long)]
    out: PathBuf,
}

pub fn fixture_resources(a: ResourcesArgs) -> Result<()> {
    let datasets = read_corpus(&a.data)?;
    fs::create_dir_all(&a.out)?;
    LexiconSet::write_fixture_dir(&a.out.join("lexicons"))?;
    let words = embedding_vocabulary(&datasets);
    let table = EmbeddingTable::synthetic(words.iter().map(String::as_str));
    fs::write(a.out.join("embeddings.txt"), table.to_file_string())?;
    info!("{} synthetic word vectors", table.len());
    Ok(())
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// Corpus file written by `prepare`.
    #[arg(long)]
    data: PathBuf,
    /// Directory with one `<name>.tsv` file per lexicon.
    #[arg(long)]
    lexicons: PathBuf,
    /// Word vectors, one `word v1 … v300` line each.
    #[arg(long)]
    embeddings: PathBuf,
    /// Output feature matrix; the sidecar goes to `<out>.json`.
    #[arg(long)]
    out: PathBuf,
}

pub fn features(a: FeaturesArgs) -> Result<()> {
    let datasets = read_corpus(&a.data)?;
    let lex = LexiconSet::load_dir(&a.lexicons)?;
    let emb = EmbeddingTable::load(&a.embeddings)?;
    let store = FeatureStore::extract(&datasets, &lex, &emb);
    let (m, sidecar) = store.flatten(&datasets)?;
    write_matrix(&a.out, FEATURE_MAGIC, &m, &sidecar)?;
    info!("{} feature rows", m.rows);
    Ok(())
}
