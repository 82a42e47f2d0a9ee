//! Command-line frontend. Every stage persists its artifact, so each step of
//! the pipeline can be rerun and inspected on its own:
//!
//! ```text
//! semcap synth  -> corpus.txt vocab.tsv pairs.tsv
//! semcap count  -> counts.tsv [counts.bin]
//! semcap train  -> checkpoint.tsv [train.csv] [associations.tsv]
//! semcap query  -> capacity rows on stdout
//! semcap cache  -> stats cache for fast queries
//! semcap eval   -> report.tsv + metrics.json
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::corpus::{count_source, CooccurrenceCounts, DocumentSource, Vocabulary};
use crate::error::{Error, Result};
use crate::eval::{
    compute_metrics, generate_synthetic_tree_corpus, read_pairs, write_pairs, CapacityReport,
    LevelledVocabulary,
};
use crate::query::{
    build_stats_cache, write_query_tsv, QueryConfig, QueryEngine, QueryRequest, StatsCache,
};
use crate::stats::{build_association_set, WeightScheme};
use crate::training::{train_offline, write_training_log, EmbeddingTable, Space, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_INVALID: i32 = 3;
pub const EXIT_FORMAT: i32 = 4;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => EXIT_IO,
        Error::Format { .. } => EXIT_FORMAT,
        Error::EmptyVocabulary
        | Error::EmptyAssociations
        | Error::EmptyStatistics
        | Error::EmptyEvaluationSet
        | Error::UnknownTerm(_)
        | Error::EmptyTerm(_)
        | Error::InvalidConfig(_)
        | Error::InvalidInput(_) => EXIT_INVALID,
        _ => EXIT_FAILURE,
    }
}

const DEFAULT_WINDOW: usize = 20;
const DEFAULT_DELTA: f64 = 0.1;

#[derive(Debug, Parser)]
#[command(
    name = "semcap",
    version,
    about = "Semantic capacity scores from term co-occurrence, via hyperbolic embeddings"
)]
pub struct CliArgs {
    /// Seed for every random choice: init, shuffling, negative sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for counting; 1 keeps everything single-threaded.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// TOML file supplying defaults for any flag not given explicitly.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Count windowed term co-occurrences over a corpus.
    Count(CountArgs),
    /// Build the association set and train embeddings offline.
    Train(TrainArgs),
    /// Evaluate semantic capacity of terms against a trained checkpoint.
    Query(QueryArgs),
    /// Precompute anchor co-occurrence rows for every candidate n-gram.
    Cache(CacheArgs),
    /// Score a checkpoint or report against hypernym-hyponym ground truth.
    Eval(EvalArgs),
    /// Generate a synthetic tree corpus with ground-truth levels and edges.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct CountArgs {
    /// Corpus file: plain text (one document per line) or JSON lines with
    /// title/abstract fields (detected by extension).
    #[arg(long)]
    corpus: PathBuf,
    /// Term list, one per line; an optional tab-separated level column is
    /// carried along for eval.
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    window: Option<usize>,
    /// Counts TSV output.
    #[arg(long)]
    out: PathBuf,
    /// Optional compact binary counts cache.
    #[arg(long)]
    bin: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Counts file (TSV or binary, sniffed).
    #[arg(long)]
    counts: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Association weighting: npmi or raw.
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    burn_in_divisor: Option<f64>,
    /// Geometry: lorentz or euclidean.
    #[arg(long)]
    space: Option<String>,
    /// Include the positive pair's own term in the softmax denominator.
    #[arg(long)]
    include_positive: bool,
    /// Checkpoint output (embedding file + config echo).
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch loss log (CSV).
    #[arg(long)]
    log: Option<PathBuf>,
    /// Also persist the association set as TSV.
    #[arg(long)]
    associations_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct QueryArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Offline counts; supply the statistics base for new-term NPMI.
    #[arg(long)]
    counts: PathBuf,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Stats cache built by `semcap cache`; consulted before the corpus.
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    include_positive: bool,
    /// Terms to evaluate.
    #[arg(required = true)]
    terms: Vec<String>,
}

#[derive(Debug, Args)]
struct CacheArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    window: Option<usize>,
    /// Longest candidate n-gram, in tokens.
    #[arg(long, default_value_t = 3)]
    max_tokens: usize,
    /// Candidates seen fewer times than this are not persisted.
    #[arg(long, default_value_t = 2)]
    min_count: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Trained checkpoint to score.
    #[arg(long, conflicts_with = "report_in")]
    checkpoint: Option<PathBuf>,
    /// Or an existing report TSV.
    #[arg(long)]
    report_in: Option<PathBuf>,
    /// Hypernym-hyponym pairs TSV.
    #[arg(long)]
    pairs: PathBuf,
    /// Levelled vocabulary (level column required).
    #[arg(long)]
    vocab: PathBuf,
    /// Report TSV output.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Metrics JSON output; stdout when omitted.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 3)]
    branching: usize,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    #[arg(long, default_value_t = 10_000)]
    docs: usize,
    /// Directory receiving corpus.txt, vocab.tsv, and pairs.tsv.
    #[arg(long)]
    out_dir: PathBuf,
}

/// Optional TOML defaults; explicit flags always win.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    window: Option<usize>,
    dim: Option<usize>,
    batch_size: Option<usize>,
    negatives: Option<usize>,
    epochs: Option<usize>,
    learning_rate: Option<f64>,
    burn_in_epochs: Option<usize>,
    burn_in_lr_divisor: Option<f64>,
    delta: Option<f64>,
    scheme: Option<String>,
    space: Option<String>,
    seed: Option<u64>,
    jobs: Option<usize>,
    query_epochs: Option<usize>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<FileConfig> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::format(Some(path.to_owned()), e.to_string()))
    }
}

pub fn run() -> i32 {
    match try_run(CliArgs::parse()) {
        Ok(()) => EXIT_OK,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}

fn try_run(cli: CliArgs) -> Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    let jobs = cli.jobs.or(file.jobs).unwrap_or(1).max(1);

    match cli.command {
        Command::Count(args) => cmd_count(args, &file, jobs),
        Command::Train(args) => cmd_train(args, &file, seed),
        Command::Query(args) => cmd_query(args, &file, seed),
        Command::Cache(args) => cmd_cache(args, &file),
        Command::Eval(args) => cmd_eval(args),
        Command::Synth(args) => cmd_synth(args, seed),
    }
}

fn read_vocab(path: &Path) -> Result<Vocabulary> {
    let (vocab, _) = Vocabulary::read_file(path)?;
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    Ok(vocab)
}

fn cmd_count(args: CountArgs, file: &FileConfig, jobs: usize) -> Result<()> {
    let vocab = read_vocab(&args.vocab)?;
    let window = args.window.or(file.window).unwrap_or(DEFAULT_WINDOW);
    let source = DocumentSource::from_path(&args.corpus);
    let counts = count_source(&source, &vocab, window, jobs)?;
    counts.write_tsv(&args.out, &vocab)?;
    if let Some(bin) = &args.bin {
        counts.write_binary(bin, &vocab)?;
    }
    println!(
        "pairs={} Z={} terms={}",
        counts.n_pairs(),
        counts.total(),
        vocab.len()
    );
    Ok(())
}

fn train_config(args: &TrainArgs, file: &FileConfig, seed: u64) -> Result<TrainConfig> {
    let defaults = TrainConfig::default();
    let space = match args.space.as_deref().or(file.space.as_deref()) {
        Some(s) => Space::parse(s)?,
        None => defaults.space,
    };
    Ok(TrainConfig {
        dim: args.dim.or(file.dim).unwrap_or(defaults.dim),
        batch_size: args
            .batch_size
            .or(file.batch_size)
            .unwrap_or(defaults.batch_size),
        negatives_per_pair: args
            .negatives
            .or(file.negatives)
            .unwrap_or(defaults.negatives_per_pair),
        epochs: args.epochs.or(file.epochs).unwrap_or(defaults.epochs),
        learning_rate: args
            .lr
            .or(file.learning_rate)
            .unwrap_or(defaults.learning_rate),
        burn_in_epochs: args
            .burn_in
            .or(file.burn_in_epochs)
            .unwrap_or(defaults.burn_in_epochs),
        burn_in_lr_divisor: args
            .burn_in_divisor
            .or(file.burn_in_lr_divisor)
            .unwrap_or(defaults.burn_in_lr_divisor),
        seed,
        space,
        include_positive_in_denominator: args.include_positive,
    })
}

fn cmd_train(args: TrainArgs, file: &FileConfig, seed: u64) -> Result<()> {
    let vocab = read_vocab(&args.vocab)?;
    let counts = CooccurrenceCounts::read_auto(&args.counts, &vocab)?;
    let scheme = match args.scheme.as_deref().or(file.scheme.as_deref()) {
        Some(s) => WeightScheme::parse(s)?,
        None => WeightScheme::Npmi,
    };
    let delta = args.delta.or(file.delta).unwrap_or(DEFAULT_DELTA);
    let config = train_config(&args, file, seed)?;

    let associations = build_association_set(&counts, scheme, delta)?;
    if let Some(path) = &args.associations_out {
        associations.write_tsv(path, &vocab)?;
    }
    let outcome = train_offline(&associations, &vocab, &config)?;
    outcome.table.write_file(&args.out, Some(&config))?;
    if let Some(path) = &args.log {
        write_training_log(path, &outcome.log)?;
    }
    let final_loss = outcome.log.last().map(|r| r.loss).unwrap_or(f64::NAN);
    println!(
        "associations={} final_loss={final_loss}",
        associations.len()
    );
    Ok(())
}

fn cmd_query(args: QueryArgs, file: &FileConfig, seed: u64) -> Result<()> {
    if args.corpus.is_none() && args.cache.is_none() {
        return Err(Error::InvalidConfig(
            "supply --corpus, --cache, or both".into(),
        ));
    }
    let table = EmbeddingTable::read_file(&args.checkpoint)?;
    let counts = CooccurrenceCounts::read_auto(&args.counts, table.vocab())?;
    let defaults = QueryConfig::default();
    let config = QueryConfig {
        window: args.window.or(file.window).unwrap_or(DEFAULT_WINDOW),
        delta: args.delta.or(file.delta).unwrap_or(DEFAULT_DELTA),
        epochs: args.epochs.or(file.query_epochs).unwrap_or(defaults.epochs),
        learning_rate: args
            .lr
            .or(file.learning_rate)
            .unwrap_or(defaults.learning_rate),
        negatives_per_pair: args
            .negatives
            .or(file.negatives)
            .unwrap_or(defaults.negatives_per_pair),
        seed,
        include_positive_in_denominator: args.include_positive,
    };

    let cache = args
        .cache
        .as_deref()
        .map(|p| StatsCache::read_file(p, table.vocab()))
        .transpose()?;
    let mut engine = QueryEngine::new(&table, &counts, config)?;
    if let Some(cache) = &cache {
        engine = engine.with_cache(cache)?;
    }
    let corpus = match &args.corpus {
        Some(path) => DocumentSource::from_path(path),
        None => DocumentSource::Memory(Vec::new()),
    };
    let result = engine.query(&QueryRequest { terms: args.terms }, &corpus)?;
    let stdout = std::io::stdout();
    write_query_tsv(&mut stdout.lock(), &result).map_err(|e| Error::io("<stdout>", e))?;
    Ok(())
}

fn cmd_cache(args: CacheArgs, file: &FileConfig) -> Result<()> {
    let vocab = read_vocab(&args.vocab)?;
    let window = args.window.or(file.window).unwrap_or(DEFAULT_WINDOW);
    let source = DocumentSource::from_path(&args.corpus);
    let cache = build_stats_cache(&source, &vocab, window, args.max_tokens, args.min_count)?;
    cache.write_file(&args.out)?;
    println!("candidates={}", cache.len());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let levelled = LevelledVocabulary::read_file(&args.vocab)?;
    let pairs = read_pairs(&args.pairs)?;

    // Scores aligned to the levelled vocabulary, whatever their source.
    let scores: Vec<f64> = match (&args.checkpoint, &args.report_in) {
        (Some(ckpt), None) => {
            let table = EmbeddingTable::read_file(ckpt)?;
            levelled
                .vocab()
                .iter()
                .map(|(_, term)| {
                    table
                        .vocab()
                        .id_of_normalized(term)
                        .map(|id| table.capacity(id))
                        .ok_or_else(|| Error::UnknownTerm(term.to_owned()))
                })
                .collect::<Result<_>>()?
        }
        (None, Some(path)) => {
            let (rvocab, rreport) = CapacityReport::read_tsv(path)?;
            levelled
                .vocab()
                .iter()
                .map(|(_, term)| {
                    rvocab
                        .id_of_normalized(term)
                        .map(|id| rreport.score(id))
                        .ok_or_else(|| Error::UnknownTerm(term.to_owned()))
                })
                .collect::<Result<_>>()?
        }
        _ => {
            return Err(Error::InvalidConfig(
                "supply exactly one of --checkpoint or --report-in".into(),
            ))
        }
    };
    let report = CapacityReport::from_scores(scores);
    let metrics = compute_metrics(&report, &levelled, &pairs)?;

    if let Some(path) = &args.report {
        report.write_tsv(path, levelled.vocab())?;
    }
    let json =
        serde_json::to_string_pretty(&metrics).map_err(|e| Error::InvalidInput(e.to_string()))?;
    match &args.metrics {
        Some(path) => {
            fs::write(path, format!("{json}\n")).map_err(|e| Error::io(path, e))?;
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs, seed: u64) -> Result<()> {
    let synth = generate_synthetic_tree_corpus(args.branching, args.depth, args.docs, seed)?;
    fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;

    let corpus_path = args.out_dir.join("corpus.txt");
    let mut text = synth.documents.join("\n");
    text.push('\n');
    fs::write(&corpus_path, text).map_err(|e| Error::io(&corpus_path, e))?;

    let vocab_path = args.out_dir.join("vocab.tsv");
    synth
        .vocab
        .vocab()
        .write_file(&vocab_path, Some(synth.vocab.levels()))?;

    let pairs_path = args.out_dir.join("pairs.tsv");
    write_pairs(&pairs_path, &synth.pairs)?;

    println!(
        "terms={} pairs={} docs={} dir={}",
        synth.vocab.vocab().len(),
        synth.pairs.len(),
        synth.documents.len(),
        args.out_dir.display()
    );
    Ok(())
}
