//! Command-line front end. Every subcommand writes its outputs and a
//! `manifest.json` into `--out`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::analysis::{
    self, discourse_effect_over_turns, effect_csv, evaluate, factor_summaries, histogram_csv,
    lr_tfidf_baseline, metrics_csv, strong_topic_histogram, BaselineOptions, MetricsRow,
};
use crate::config::{ModelConfig, Variant};
use crate::corpus::{
    build_corpus, read_jsonl, read_pairs, Conversation, CorpusInput, CorpusOptions, DatasetSplit,
    FlattenOptions, Split, Vocabulary, PAIRS_FILE, VOCAB_FILE,
};
use crate::error::{Error, Result};
use crate::manifest::{verify_artifact, RunManifest};
use crate::model::Dtdmn;
use crate::synthetic::{synthesize, SyntheticConfig};
use crate::trainer::{ablate, grid_search, log_csv, train};

pub const MODEL_FILE: &str = "model.json";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const POSTS_FILE: &str = "posts.jsonl";
pub const TRUTH_FILE: &str = "truth.json";
pub const ABLATION_FILE: &str = "ablation.csv";
pub const GRID_FILE: &str = "grid.csv";

#[derive(Debug, Parser)]
#[command(
    name = "dtdmn",
    version,
    about = "Pairwise persuasiveness prediction with topic and discourse memory"
)]
pub struct Cli {
    /// Flat `key = value` model configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random stream; overrides the configuration file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Only print warnings and errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Flatten raw debates into paired, split conversations.
    BuildCorpus(BuildCorpusArgs),
    /// Generate a synthetic debate corpus with planted signal.
    Synthesize(SynthesizeArgs),
    /// Train a model on a built corpus.
    Train(TrainArgs),
    /// Score a split with a trained model or the tf-idf baseline.
    Eval(EvalArgs),
    /// Export top words, strong-topic histograms, effects and assignment maps.
    Interpret(InterpretArgs),
    /// Train and test all four model variants with the same seed.
    Ablate(AblateArgs),
    /// Train over a grid of topic and discourse counts.
    GridSearch(GridSearchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    /// Reddit-style posts with parent links.
    Cmv,
    /// Per-utterance court records.
    Court,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Validation,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Validation => Split::Validation,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Args)]
pub struct BuildCorpusArgs {
    /// JSONL input file.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "cmv")]
    pub format: InputFormat,
    /// Minimum training-split frequency for a word to enter the vocabulary.
    #[arg(long, default_value_t = 10)]
    pub min_count: usize,
    /// Sequence length; defaults to the configuration's `max_len`.
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Minimum word-set overlap between paired conversations.
    #[arg(long, default_value_t = 0.5)]
    pub jaccard: f64,
    /// Drop discussions with fewer distinct challengers.
    #[arg(long, default_value_t = 10)]
    pub min_challengers: usize,
    /// Drop replies with this many raw words or fewer.
    #[arg(long, default_value_t = 50)]
    pub min_words: usize,
    /// Shuffle win/lose labels within each moot (a no-signal control).
    #[arg(long)]
    pub permute_labels: bool,
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    /// Number of discussion threads to generate.
    #[arg(long, default_value_t = 200)]
    pub moots: usize,
    /// Number of planted topic clusters.
    #[arg(long, default_value_t = 3)]
    pub topics: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory written by `build-corpus`.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Model variant; overrides the configuration file.
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Epoch cap; overrides the configuration file.
    #[arg(long)]
    pub max_epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory written by `build-corpus`.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Directory written by `train`.
    #[arg(long, required_unless_present = "baseline")]
    pub model: Option<PathBuf>,
    /// Fit and score the tf-idf logistic-regression baseline instead.
    #[arg(long, conflicts_with = "model")]
    pub baseline: bool,
    /// Split to score.
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
}

#[derive(Debug, Args)]
pub struct InterpretArgs {
    /// Directory written by `build-corpus`.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Directory written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Split whose conversations are analyzed.
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Words listed per factor.
    #[arg(long, default_value_t = 10)]
    pub top_n: usize,
    /// Strong-topic threshold on a turn's topic mixture.
    #[arg(long, default_value_t = 0.2)]
    pub threshold: f64,
    /// Number of conversations exported as assignment maps and traces.
    #[arg(long, default_value_t = 20)]
    pub limit: usize,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Directory written by `build-corpus`.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Epoch cap; overrides the configuration file.
    #[arg(long)]
    pub max_epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GridSearchArgs {
    /// Directory written by `build-corpus`.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Topic counts to try.
    #[arg(long, value_delimiter = ',', default_value = "10,20,30,40,50")]
    pub topics: Vec<usize>,
    /// Discourse counts to try.
    #[arg(long, value_delimiter = ',', default_value = "4,6,8,10")]
    pub discourse: Vec<usize>,
    /// Shorter epoch cap for every grid point.
    #[arg(long)]
    pub max_epochs: Option<usize>,
}

fn base_config(cli: &Cli) -> Result<ModelConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                Error::config(format!("cannot read config `{}`: {e}", path.display()))
            })?;
            ModelConfig::parse(&text).map_err(|e| match e {
                Error::Parse { line, message, .. } => Error::Parse {
                    path: path.display().to_string(),
                    line,
                    message,
                },
                other => other,
            })?
        }
        None => ModelConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// Configuration for a model over `vocab`: an unset `vocab_size` is filled
/// in, a conflicting one is an error.
fn model_config(cli: &Cli, vocab: &Vocabulary) -> Result<ModelConfig> {
    let mut cfg = base_config(cli)?;
    if cfg.vocab_size == 0 {
        cfg.vocab_size = vocab.len();
    } else if cfg.vocab_size != vocab.len() {
        return Err(Error::dimension("vocab_size", vocab.len(), cfg.vocab_size));
    }
    cfg.validate()?;
    Ok(cfg)
}

struct Corpus {
    data: DatasetSplit,
    vocab: Vocabulary,
    files: Vec<PathBuf>,
}

fn load_corpus(dir: &Path, seed: u64) -> Result<Corpus> {
    let pairs = verify_artifact(dir, PAIRS_FILE)?;
    let vocab_path = verify_artifact(dir, VOCAB_FILE)?;
    let vocab = Vocabulary::from_lines(&fs::read_to_string(&vocab_path)?);
    Ok(Corpus {
        data: read_pairs(&pairs, seed)?,
        vocab,
        files: vec![pairs, vocab_path],
    })
}

fn load_model(dir: &Path) -> Result<(Dtdmn, PathBuf)> {
    let path = verify_artifact(dir, MODEL_FILE)?;
    Ok((Dtdmn::load(&path)?, path))
}

/// A model loaded for `corpus` must agree with it, and with `--config` when
/// one is given.
fn check_model(cli: &Cli, model: &Dtdmn, corpus: &Corpus) -> Result<()> {
    if model.config.vocab_size != corpus.vocab.len() {
        return Err(Error::dimension(
            "vocab_size",
            corpus.vocab.len(),
            model.config.vocab_size,
        ));
    }
    if cli.config.is_some() {
        model.check_compatible(&model_config(cli, &corpus.vocab)?)?;
    }
    Ok(())
}

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(v)?)
}

/// Write the manifest and re-check every declared output against it.
fn finish(mut manifest: RunManifest, out: &Path, files: &[PathBuf]) -> Result<Vec<PathBuf>> {
    manifest.add_outputs(out, files)?;
    manifest.write(out)?;
    for f in files {
        let rel = f.strip_prefix(out).unwrap_or(f);
        verify_artifact(out, &rel.to_string_lossy())?;
    }
    Ok(files.to_vec())
}

fn write(out: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
    let path = out.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

/// Run one parsed command; returns the files it wrote.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(&cli.out)?;
    match &cli.command {
        Command::BuildCorpus(a) => build_corpus_cmd(cli, a),
        Command::Synthesize(a) => synthesize_cmd(cli, a),
        Command::Train(a) => train_cmd(cli, a),
        Command::Eval(a) => eval_cmd(cli, a),
        Command::Interpret(a) => interpret_cmd(cli, a),
        Command::Ablate(a) => ablate_cmd(cli, a),
        Command::GridSearch(a) => grid_search_cmd(cli, a),
    }
}

fn build_corpus_cmd(cli: &Cli, a: &BuildCorpusArgs) -> Result<Vec<PathBuf>> {
    let base = base_config(cli)?;
    let opts = CorpusOptions {
        min_count: a.min_count,
        max_len: a.max_len.unwrap_or(base.max_len),
        jaccard: a.jaccard,
        seed: base.seed,
        flatten: FlattenOptions {
            min_words: a.min_words,
            min_challengers: a.min_challengers,
        },
        permute_labels: a.permute_labels,
    };
    if opts.max_len == 0 {
        return Err(Error::config("`max_len` must be positive"));
    }
    let input = match a.format {
        InputFormat::Cmv => CorpusInput::Cmv(read_jsonl(&a.input)?),
        InputFormat::Court => CorpusInput::Court(read_jsonl(&a.input)?),
    };
    let artifacts = build_corpus(&input, &opts)?;
    log::info!(
        "{} conversations, {} pairs (train {}, validation {}, test {}), vocabulary {}",
        artifacts.stats.convs,
        artifacts.stats.pairs,
        artifacts.data.train.len(),
        artifacts.data.validation.len(),
        artifacts.data.test.len(),
        artifacts.vocab.len()
    );
    let files = artifacts.write(&cli.out)?;
    let mut manifest = RunManifest::new("build-corpus", opts.seed, to_value(&opts)?);
    manifest.add_input(&a.input)?;
    finish(manifest, &cli.out, &files)
}

fn synthesize_cmd(cli: &Cli, a: &SynthesizeArgs) -> Result<Vec<PathBuf>> {
    let cfg = SyntheticConfig {
        n_moots: a.moots,
        n_topics: a.topics,
        seed: base_config(cli)?.seed,
        ..SyntheticConfig::default()
    };
    let corpus = synthesize(&cfg)?;
    log::info!("{} posts over {} moots", corpus.posts.len(), cfg.n_moots);
    let files = vec![
        write(&cli.out, POSTS_FILE, corpus.to_jsonl()?)?,
        write(
            &cli.out,
            TRUTH_FILE,
            serde_json::to_string_pretty(&corpus.truth)? + "\n",
        )?,
    ];
    finish(
        RunManifest::new("synthesize", cfg.seed, to_value(&cfg)?),
        &cli.out,
        &files,
    )
}

fn train_cmd(cli: &Cli, a: &TrainArgs) -> Result<Vec<PathBuf>> {
    let base = base_config(cli)?;
    let corpus = load_corpus(&a.corpus, base.seed)?;
    let mut cfg = model_config(cli, &corpus.vocab)?;
    if let Some(v) = a.variant {
        cfg.variant = v;
    }
    if let Some(n) = a.max_epochs {
        cfg.max_epochs = n;
    }
    let outcome = train(&corpus.data, &cfg)?;
    log::info!(
        "best epoch {} with validation accuracy {:?} after {} steps",
        outcome.best_epoch,
        outcome.best_val_accuracy,
        outcome.steps
    );
    let model_path = cli.out.join(MODEL_FILE);
    outcome.model.save(&model_path)?;
    let files = vec![
        model_path,
        write(&cli.out, TRAIN_LOG_FILE, log_csv(&outcome.log))?,
    ];
    let mut manifest = RunManifest::new("train", cfg.seed, to_value(&cfg)?);
    for f in &corpus.files {
        manifest.add_input(f)?;
    }
    finish(manifest, &cli.out, &files)
}

fn eval_cmd(cli: &Cli, a: &EvalArgs) -> Result<Vec<PathBuf>> {
    let base = base_config(cli)?;
    let mut manifest_inputs = Vec::new();
    let (report, variant, seed, config) = match &a.model {
        Some(dir) => {
            let (model, path) = load_model(dir)?;
            let seed = cli.seed.unwrap_or(model.config.seed);
            let corpus = load_corpus(&a.corpus, seed)?;
            check_model(cli, &model, &corpus)?;
            let report = evaluate(&model, corpus.data.part(a.split.into()), seed)?;
            manifest_inputs.extend(corpus.files);
            manifest_inputs.push(path);
            (
                report,
                model.variant().to_string(),
                seed,
                to_value(&model.config)?,
            )
        }
        None => {
            let corpus = load_corpus(&a.corpus, base.seed)?;
            let opts = BaselineOptions::default();
            let report = lr_tfidf_baseline(
                &corpus.data.train,
                corpus.data.part(a.split.into()),
                base.seed,
                &opts,
            )?;
            manifest_inputs.extend(corpus.files);
            (report, "lr_tfidf".to_string(), base.seed, to_value(&opts)?)
        }
    };
    log::info!(
        "{variant}: accuracy {:.4}, F1 {:.4} over {} pairs",
        report.accuracy,
        report.f1,
        report.n_pairs
    );
    let files = vec![
        write(
            &cli.out,
            METRICS_FILE,
            metrics_csv(&[MetricsRow::new(variant, &report)]),
        )?,
        write(&cli.out, PREDICTIONS_FILE, report.predictions_jsonl()?)?,
    ];
    let mut manifest = RunManifest::new("eval", seed, config);
    for f in &manifest_inputs {
        manifest.add_input(f)?;
    }
    finish(manifest, &cli.out, &files)
}

/// Distinct conversations of a split, in pair order.
fn split_conversations(data: &DatasetSplit, split: Split) -> Vec<Conversation> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for p in data.part(split) {
        for c in [&p.positive, &p.negative] {
            if seen.insert(c.key()) {
                out.push(c.clone());
            }
        }
    }
    out
}

#[derive(Serialize)]
struct WeightTrace {
    conv_id: String,
    score: f64,
    turn_attention: Vec<f64>,
    weights: Vec<Vec<f64>>,
}

fn interpret_cmd(cli: &Cli, a: &InterpretArgs) -> Result<Vec<PathBuf>> {
    let (model, model_path) = load_model(&a.model)?;
    let seed = cli.seed.unwrap_or(model.config.seed);
    let corpus = load_corpus(&a.corpus, seed)?;
    check_model(cli, &model, &corpus)?;
    let convs = split_conversations(&corpus.data, a.split.into());

    let summaries = factor_summaries(&model, &corpus.vocab, a.top_n)?;
    let histogram = strong_topic_histogram(&model, &convs, a.threshold)?;
    let mut effects = Vec::new();
    for j in 0..model.config.discourse {
        effects.extend(discourse_effect_over_turns(&model, &convs, j)?);
    }
    let mut maps = Vec::new();
    let mut traces = Vec::new();
    for c in convs.iter().take(a.limit) {
        maps.push(analysis::assignment_map(&model, &corpus.vocab, c)?);
        let t = model.trace(c)?;
        traces.push(WeightTrace {
            conv_id: t.conv_id,
            score: t.score,
            turn_attention: t.turn_attention,
            weights: t.turns.into_iter().map(|tt| tt.w).collect(),
        });
    }
    let files = vec![
        write(
            &cli.out,
            "factors.json",
            serde_json::to_string_pretty(&summaries)? + "\n",
        )?,
        write(&cli.out, "strong_topics.csv", histogram_csv(&histogram))?,
        write(&cli.out, "discourse_effects.csv", effect_csv(&effects))?,
        write(
            &cli.out,
            "assignments.json",
            serde_json::to_string(&maps)? + "\n",
        )?,
        write(
            &cli.out,
            "traces.json",
            serde_json::to_string(&traces)? + "\n",
        )?,
    ];
    let mut manifest = RunManifest::new(
        "interpret",
        seed,
        serde_json::json!({
            "model": model.config,
            "top_n": a.top_n,
            "threshold": a.threshold,
            "limit": a.limit,
            "split": Split::from(a.split).name(),
        }),
    );
    for f in corpus.files.iter().chain([&model_path]) {
        manifest.add_input(f)?;
    }
    finish(manifest, &cli.out, &files)
}

fn ablate_cmd(cli: &Cli, a: &AblateArgs) -> Result<Vec<PathBuf>> {
    let base = base_config(cli)?;
    let corpus = load_corpus(&a.corpus, base.seed)?;
    let mut cfg = model_config(cli, &corpus.vocab)?;
    if let Some(n) = a.max_epochs {
        cfg.max_epochs = n;
    }
    let rows = ablate(&corpus.data, &cfg)?;
    let metrics: Vec<MetricsRow> = rows
        .iter()
        .map(|r| MetricsRow::new(r.variant.name(), &r.test))
        .collect();
    for m in &metrics {
        log::info!("{}: accuracy {:.4}, F1 {:.4}", m.variant, m.accuracy, m.f1);
    }
    let files = vec![write(&cli.out, ABLATION_FILE, metrics_csv(&metrics))?];
    let mut manifest = RunManifest::new("ablate", cfg.seed, to_value(&cfg)?);
    for f in &corpus.files {
        manifest.add_input(f)?;
    }
    finish(manifest, &cli.out, &files)
}

fn grid_search_cmd(cli: &Cli, a: &GridSearchArgs) -> Result<Vec<PathBuf>> {
    let base = base_config(cli)?;
    let corpus = load_corpus(&a.corpus, base.seed)?;
    let cfg = model_config(cli, &corpus.vocab)?;
    let result = grid_search(&corpus.data, &a.topics, &a.discourse, &cfg, a.max_epochs)?;
    let best = &result.rows[result.best];
    log::info!(
        "best K = {}, D = {} with validation accuracy {:.4}",
        best.topics,
        best.discourse,
        best.val_accuracy
    );
    let files = vec![write(&cli.out, GRID_FILE, result.to_csv())?];
    let mut manifest = RunManifest::new(
        "grid-search",
        cfg.seed,
        serde_json::json!({ "base": cfg, "topics": a.topics, "discourse": a.discourse, "max_epochs": a.max_epochs }),
    );
    for f in &corpus.files {
        manifest.add_input(f)?;
    }
    finish(manifest, &cli.out, &files)
}
