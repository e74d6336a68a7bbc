//! The `prefrank` command line.
//!
//! Every subcommand reads an optional JSON [`RunConfig`], applies flag
//! overrides, and writes `resolved_config.json` plus `versions.json` into its
//! output directory. Running again with `--config <out>/resolved_config.json`
//! reproduces the outputs byte for byte.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::cohp::{
    round_ablation, run_cohp, AblationGrid, CohpConfig, GeneratorPort, SubprocessGenerator,
    SyntheticGenerator, SyntheticModel, DEFAULT_GAIN,
};
use crate::datapipe::{
    aesthetic_select, align_distribution, build_pairs, corpus_stats, filter_by_agreement, ingest,
    CategoryDistribution, Corpus,
};
use crate::domain::{Category, Prompt, Sample};
use crate::eval::{rank_agreement, score_table, NORMALIZED_MSE_DEFINITION};
use crate::io::{self, EmbeddingMatrix, SampleRow};
use crate::reward::{RewardHead, DEFAULT_SIGMA_FLOOR};
use crate::rng::Rng;
use crate::synth::random_probe;
use crate::train::{
    evaluate_accuracy, loss_history_csv, pairs_from_records, train, TrainConfig, TrainMetadata,
};

/// Raised for bad invocations; mapped to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    pub samples: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    /// Extra annotations over the same samples, scored after training.
    pub held_out_annotations: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// JSON object mapping model name to a human reference score.
    pub human_scores: Option<PathBuf>,
    pub generators: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub threshold: f64,
}

impl Default for FilterSection {
    fn default() -> Self {
        FilterSection {
            threshold: crate::reference::settings::TRAIN_AGREEMENT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectSection {
    pub floor: f64,
    pub top_fraction: f64,
    /// When set, the selection is resampled to this many samples.
    pub align_total: Option<usize>,
    /// Target shares; uniform over the selected categories when absent.
    pub distribution: Option<CategoryDistribution>,
    pub seed: u64,
}

impl Default for SelectSection {
    fn default() -> Self {
        SelectSection {
            floor: crate::reference::settings::AESTHETIC_FLOOR,
            top_fraction: crate::reference::settings::AESTHETIC_TOP_FRACTION,
            align_total: None,
            distribution: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadSection {
    /// Hidden layer widths between the embedding and the (μ, σ) output.
    pub hidden: Vec<usize>,
    pub sigma_floor: f64,
}

impl Default for HeadSection {
    fn default() -> Self {
        HeadSection {
            hidden: Vec::new(),
            sigma_floor: DEFAULT_SIGMA_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct CohpSection {
    pub run: CohpConfig,
    /// Use only the first `models` generators of the spec file.
    pub models: Option<usize>,
    /// Defaults to a single placeholder prompt.
    pub prompts: Vec<Prompt>,
    pub ablation: AblationGrid,
}

/// Every setting a run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: InputPaths,
    pub filter: FilterSection,
    pub select: SelectSection,
    pub head: HeadSection,
    pub train: TrainConfig,
    pub cohp: CohpSection,
}

/// Generator spec file for `cohp`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Seeds the probe direction shared by all synthetic generators.
    #[serde(default)]
    pub probe_seed: u64,
    #[serde(default = "default_gain")]
    pub gain: f64,
    #[serde(default)]
    pub off_probe_noise: f64,
    pub generators: Vec<GeneratorEntry>,
}

fn default_dim() -> usize {
    8
}
fn default_gain() -> f64 {
    DEFAULT_GAIN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorEntry {
    Synthetic {
        name: String,
        quality: f64,
        #[serde(default)]
        noise: f64,
    },
    /// An external process speaking the line protocol. The argument
    /// `{embeddings}` is replaced by the path of the file it appends to.
    Subprocess { name: String, command: Vec<String> },
}

#[derive(Parser, Debug)]
#[command(name = "prefrank", version, about = "Pairwise preference ranking engine")]
struct Cli {
    /// Worker threads for data-parallel work (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate samples, annotations and embeddings and print their sizes.
    IngestCheck(DataArgs),
    /// Keep annotations whose agreement reaches the threshold.
    Filter(DataArgs),
    /// Aesthetic floor plus per-category top fraction, optionally aligned.
    Select(DataArgs),
    /// Build unlabelled same-prompt pairs.
    Pairs(DataArgs),
    /// Corpus counts and agreement statistics.
    Stats(DataArgs),
    /// Train a reward head.
    Train(TrainArgs),
    /// Pairwise accuracy of a checkpoint.
    Eval(DataArgs),
    /// Per-model, per-category score table and rank agreement.
    Benchmark(DataArgs),
    /// Model-wise then sample-wise selection with a round ablation.
    Cohp(CohpArgs),
    /// Run the built-in example checks.
    Selftest,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    samples: Option<PathBuf>,
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    human_scores: Option<PathBuf>,
    /// Agreement threshold for `filter`.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    floor: Option<f64>,
    #[arg(long)]
    top_fraction: Option<f64>,
    /// Resample the selection to this many samples.
    #[arg(long)]
    align_total: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug, Clone)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    samples: Option<PathBuf>,
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    held_out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// `uncertain` or `deterministic`.
    #[arg(long)]
    loss: Option<String>,
    /// Hidden widths, e.g. `64,32`.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
}

#[derive(Args, Debug, Clone)]
struct CohpArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    generators: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Number of generators `M` taken from the spec.
    #[arg(long)]
    models: Option<usize>,
    /// Model-wise rounds `N`.
    #[arg(long)]
    model_rounds: Option<usize>,
    /// Sample-wise rounds `S`.
    #[arg(long)]
    sample_rounds: Option<usize>,
    /// Samples per sample-wise round `B`.
    #[arg(long)]
    batch: Option<usize>,
    /// Denoise strengths, e.g. `0.8,0.8,0.5,0.5`.
    #[arg(long, value_delimiter = ',')]
    schedule: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Round counts for the ablation table, e.g. `1,2,3,4,5`.
    #[arg(long, value_delimiter = ',')]
    ablation_rounds: Option<Vec<usize>>,
}

/// Runs the command line and returns the process exit code.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return 1;
        }
    };
    match pool.install(|| run(cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                2
            } else {
                1
            }
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::IngestCheck(a) => ingest_check(a),
        Command::Filter(a) => filter(a),
        Command::Select(a) => select(a),
        Command::Pairs(a) => pairs(a),
        Command::Stats(a) => stats(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Cohp(a) => cohp(a),
        Command::Selftest => selftest(),
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    match &common.config {
        None => Ok(RunConfig::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cli.load_config: {}", path.display()))?;
            serde_json::from_str(&text)
                .map_err(|e| usage(format!("cli.load_config: {}: {e}", path.display())))
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, value: &Option<PathBuf>) {
    if value.is_some() {
        slot.clone_from(value);
    }
}

fn resolve_data(a: &DataArgs) -> Result<RunConfig> {
    let mut cfg = load_config(&a.common)?;
    let inputs = &mut cfg.inputs;
    set_path(&mut inputs.samples, &a.samples);
    set_path(&mut inputs.annotations, &a.annotations);
    set_path(&mut inputs.embeddings, &a.embeddings);
    set_path(&mut inputs.checkpoint, &a.checkpoint);
    set_path(&mut inputs.human_scores, &a.human_scores);
    set(&mut cfg.filter.threshold, a.threshold);
    set(&mut cfg.select.floor, a.floor);
    set(&mut cfg.select.top_fraction, a.top_fraction);
    if a.align_total.is_some() {
        cfg.select.align_total = a.align_total;
    }
    set(&mut cfg.select.seed, a.seed);
    Ok(cfg)
}

fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| usage(format!("missing input: --{what} (or inputs.{} in the config)", what.replace('-', "_"))))
}

fn out_dir(common: &Common) -> Result<&Path> {
    let dir = common.out.as_deref().ok_or_else(|| usage("missing --out directory"))?;
    std::fs::create_dir_all(dir).with_context(|| format!("cli.out_dir: {}", dir.display()))?;
    Ok(dir)
}

#[derive(Serialize)]
struct Versions {
    prefrank: &'static str,
    embedding_format: u16,
    checkpoint_format: u16,
}

fn write_run_files(dir: &Path, cfg: &RunConfig) -> Result<()> {
    io::write_json(dir.join("resolved_config.json"), cfg).context("cli.write_run_files")?;
    let versions = Versions {
        prefrank: env!("CARGO_PKG_VERSION"),
        embedding_format: io::MATRIX_VERSION,
        checkpoint_format: io::CHECKPOINT_VERSION,
    };
    io::write_json(dir.join("versions.json"), &versions).context("cli.write_run_files")?;
    Ok(())
}

/// Rounds every non-integral number in a report to 4 decimals.
fn round_report(value: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match value {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap();
            let r = (x * 1e4).round() / 1e4 + 0.0;
            serde_json::Number::from_f64(r).map_or(Value::Null, Value::Number)
        }
        Value::Array(v) => Value::Array(v.into_iter().map(round_report).collect()),
        Value::Object(m) => Value::Object(m.into_iter().map(|(k, v)| (k, round_report(v))).collect()),
        other => other,
    }
}

fn write_report(path: &Path, report: &impl Serialize) -> Result<serde_json::Value> {
    let value = round_report(serde_json::to_value(report).context("cli.write_report")?);
    io::write_json(path, &value).context("cli.write_report")?;
    Ok(value)
}

fn load_corpus(cfg: &RunConfig, with_annotations: bool) -> Result<Corpus> {
    let samples = required(&cfg.inputs.samples, "samples")?;
    let embeddings = required(&cfg.inputs.embeddings, "embeddings")?;
    let annotations = if with_annotations {
        Some(required(&cfg.inputs.annotations, "annotations")?)
    } else {
        cfg.inputs.annotations.as_deref()
    };
    ingest(samples, annotations, embeddings).context("datapipe.ingest")
}

fn ingest_check(a: DataArgs) -> Result<()> {
    let cfg = resolve_data(&a)?;
    let corpus = load_corpus(&cfg, false)?;
    let rows = EmbeddingMatrix::read(required(&cfg.inputs.embeddings, "embeddings")?)
        .context("io.read_matrix")?
        .count();
    let report = serde_json::json!({
        "dim": corpus.dim,
        "embedding_rows": rows,
        "samples": corpus.samples.len(),
        "pairs": corpus.records.len(),
    });
    println!("{report}");
    if a.common.out.is_some() {
        let dir = out_dir(&a.common)?;
        write_run_files(dir, &cfg)?;
        write_report(&dir.join("stats.json"), &report)?;
    }
    Ok(())
}

fn filter(a: DataArgs) -> Result<()> {
    let cfg = resolve_data(&a)?;
    let dir = out_dir(&a.common)?;
    let corpus = load_corpus(&cfg, true)?;
    let kept = filter_by_agreement(&corpus.records, cfg.filter.threshold);
    write_run_files(dir, &cfg)?;
    io::write_jsonl(dir.join("annotations.jsonl"), &kept).context("datapipe.filter_by_agreement")?;
    let report = serde_json::json!({
        "threshold": cfg.filter.threshold,
        "input_pairs": corpus.records.len(),
        "kept_pairs": kept.len(),
        "dropped_pairs": corpus.records.len() - kept.len(),
        "stats": corpus_stats(&corpus.samples, &kept),
    });
    write_report(&dir.join("stats.json"), &report)?;
    println!("kept {} of {} pairs", kept.len(), corpus.records.len());
    Ok(())
}

fn write_samples(dir: &Path, dim: usize, samples: &[Sample]) -> Result<()> {
    let mut matrix = EmbeddingMatrix::new(dim)?;
    let mut rows = Vec::with_capacity(samples.len());
    for s in samples {
        let row = matrix.push(s.embedding.values())?;
        rows.push(SampleRow::from_sample(s, row));
    }
    matrix.write(dir.join("embeddings.prnk")).context("io.write_matrix")?;
    io::write_jsonl(dir.join("samples.jsonl"), &rows).context("io.write_jsonl")?;
    Ok(())
}

fn select(a: DataArgs) -> Result<()> {
    let cfg = resolve_data(&a)?;
    let dir = out_dir(&a.common)?;
    let corpus = load_corpus(&cfg, false)?;
    let s = &cfg.select;
    let mut chosen =
        aesthetic_select(&corpus.samples, s.floor, s.top_fraction).context("datapipe.aesthetic_select")?;
    if let Some(total) = s.align_total {
        let target = match &s.distribution {
            Some(d) => d.clone(),
            None => {
                let mut present: Vec<Category> = chosen.iter().map(|x| x.category).collect();
                present.sort();
                present.dedup();
                CategoryDistribution::uniform(&present).context("datapipe.align_distribution")?
            }
        };
        chosen = align_distribution(&chosen, &target, total, &Rng::new(s.seed))
            .context("datapipe.align_distribution")?;
    }
    write_run_files(dir, &cfg)?;
    write_samples(dir, corpus.dim, &chosen)?;
    let report = serde_json::json!({
        "input_samples": corpus.samples.len(),
        "selected_samples": chosen.len(),
        "stats": corpus_stats(&chosen, &[]),
    });
    write_report(&dir.join("stats.json"), &report)?;
    println!("selected {} of {} samples", chosen.len(), corpus.samples.len());
    Ok(())
}

fn pairs(a: DataArgs) -> Result<()> {
    let cfg = resolve_data(&a)?;
    let dir = out_dir(&a.common)?;
    let corpus = load_corpus(&cfg, false)?;
    let records = build_pairs(&corpus.samples);
    write_run_files(dir, &cfg)?;
    io::write_jsonl(dir.join("annotations.jsonl"), &records).context("datapipe.build_pairs")?;
    write_report(&dir.join("stats.json"), &corpus_stats(&corpus.samples, &records))?;
    println!("built {} pairs", records.len());
    Ok(())
}

fn stats(a: DataArgs) -> Result<()> {
    let cfg = resolve_data(&a)?;
    let dir = out_dir(&a.common)?;
    let corpus = load_corpus(&cfg, false)?;
    write_run_files(dir, &cfg)?;
    let report = write_report(&dir.join("stats.json"), &corpus_stats(&corpus.samples, &corpus.records))?;
    println!("{report}");
    Ok(())
}

fn resolve_train(a: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = load_config(&a.common)?;
    set_path(&mut cfg.inputs.samples, &a.samples);
    set_path(&mut cfg.inputs.annotations, &a.annotations);
    set_path(&mut cfg.inputs.embeddings, &a.embeddings);
    set_path(&mut cfg.inputs.held_out_annotations, &a.held_out);
    let t = &mut cfg.train;
    set(&mut t.epochs, a.epochs);
    set(&mut t.learning_rate, a.lr);
    set(&mut t.batch_size, a.batch_size);
    set(&mut t.seed, a.seed);
    if let Some(kind) = &a.loss {
        t.loss_kind = serde_json::from_value(serde_json::Value::String(kind.clone()))
            .map_err(|_| usage(format!("unknown --loss {kind:?}; expected uncertain or deterministic")))?;
    }
    set(&mut cfg.head.hidden, a.hidden.clone());
    Ok(cfg)
}

/// The head as it will be read back from its checkpoint.
fn narrowed(head: &RewardHead) -> Result<RewardHead> {
    Ok(io::decode_checkpoint(Path::new("<memory>"), &io::encode_checkpoint(head))?)
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let cfg = resolve_train(&a)?;
    cfg.train.validate().map_err(|e| usage(format!("train.validate: {e}")))?;
    let dir = out_dir(&a.common)?;
    let corpus = load_corpus(&cfg, true)?;
    let set = pairs_from_records(&corpus.samples, &corpus.records).context("train.pairs_from_records")?;

    let mut dims = vec![corpus.dim];
    dims.extend(&cfg.head.hidden);
    dims.push(2);
    let mut init_rng = Rng::new(cfg.train.seed).substream_named("init");
    let head0 = RewardHead::init(&dims, cfg.head.sigma_floor, &mut init_rng).context("reward.init")?;
    let outcome = train(&set.pairs, head0, &cfg.train).context("train.train")?;
    let head = narrowed(&outcome.head).context("io.encode_checkpoint")?;
    let train_accuracy = evaluate_accuracy(&head, &set.pairs).context("train.evaluate_accuracy")?;

    let held_out_accuracy = match &cfg.inputs.held_out_annotations {
        Some(path) => {
            let held = ingest(
                required(&cfg.inputs.samples, "samples")?,
                Some(path),
                required(&cfg.inputs.embeddings, "embeddings")?,
            )
            .context("datapipe.ingest")?;
            let hs = pairs_from_records(&held.samples, &held.records).context("train.pairs_from_records")?;
            Some(evaluate_accuracy(&head, &hs.pairs).context("train.evaluate_accuracy")?)
        }
        None => None,
    };

    let meta = TrainMetadata {
        seed: cfg.train.seed,
        epochs: cfg.train.epochs,
        steps: outcome.history.len(),
        pairs: set.pairs.len(),
        excluded_ties: set.excluded_ties.len(),
        layer_dims: head.dims().to_vec(),
        sigma_floor: head.sigma_floor(),
        loss_kind: cfg.train.loss_kind,
        final_mean_loss: outcome.history.last().map_or(f64::NAN, |r| r.mean_loss),
        train_accuracy,
        loss_curve: outcome.history.iter().map(|r| r.mean_loss).collect(),
    };

    write_run_files(dir, &cfg)?;
    io::write_checkpoint(dir.join("checkpoint.prnh"), &head).context("io.write_checkpoint")?;
    io::write_json(dir.join("checkpoint.json"), &meta).context("io.write_json")?;
    std::fs::write(dir.join("loss_history.csv"), loss_history_csv(&outcome.history))
        .context("train.loss_history_csv")?;
    let report = serde_json::json!({
        "pairs": set.pairs.len(),
        "excluded_ties": set.excluded_ties.len(),
        "steps": meta.steps,
        "final_mean_loss": meta.final_mean_loss,
        "train_accuracy": train_accuracy,
        "held_out_accuracy": held_out_accuracy,
    });
    write_report(&dir.join("train_report.json"), &report)?;
    println!("train accuracy {train_accuracy:.4}");
    if let Some(h) = held_out_accuracy {
        println!("held-out accuracy {h:.4}");
    }
    Ok(())
}

fn load_head(cfg: &RunConfig) -> Result<RewardHead> {
    let path = required(&cfg.inputs.checkpoint, "checkpoint")?;
    io::read_checkpoint(path).context("io.read_checkpoint")
}

fn eval_cmd(a: DataArgs) -> Result<()> {
    let cfg = resolve_data(&a)?;
    let dir = out_dir(&a.common)?;
    let head = load_head(&cfg)?;
    let corpus = load_corpus(&cfg, true)?;
    let set = pairs_from_records(&corpus.samples, &corpus.records).context("train.pairs_from_records")?;
    let accuracy = evaluate_accuracy(&head, &set.pairs).context("train.evaluate_accuracy")?;
    write_run_files(dir, &cfg)?;
    let report = serde_json::json!({
        "pairs": set.pairs.len(),
        "excluded_ties": set.excluded_ties.len(),
        "accuracy": accuracy,
    });
    write_report(&dir.join("eval.json"), &report)?;
    println!("accuracy {accuracy:.4}");
    Ok(())
}

fn benchmark(a: DataArgs) -> Result<()> {
    let cfg = resolve_data(&a)?;
    let dir = out_dir(&a.common)?;
    let head = load_head(&cfg)?;
    let corpus = load_corpus(&cfg, false)?;
    let table = score_table(&head, &corpus.samples).context("eval.score_table")?;
    write_run_files(dir, &cfg)?;
    std::fs::write(dir.join("table.csv"), table.to_csv()).context("eval.score_table")?;
    if let Some(path) = &cfg.inputs.human_scores {
        let human: BTreeMap<String, f64> = io::read_json(path).context("eval.rank_agreement")?;
        let agreement = rank_agreement(&table.all_scores(), &human).context("eval.rank_agreement")?;
        let report = serde_json::json!({
            "models": human.len(),
            "spearman": agreement.spearman,
            "kendall": agreement.kendall,
            "normalized_mse": agreement.normalized_mse,
            "normalized_mse_definition": NORMALIZED_MSE_DEFINITION,
        });
        write_report(&dir.join("agreement.json"), &report)?;
        println!(
            "spearman {:.4} kendall {:.4} normalized_mse {:.4}",
            agreement.spearman, agreement.kendall, agreement.normalized_mse
        );
    }
    for (rank, model) in table.ranked_models().iter().enumerate() {
        println!("{:>3} {model}", rank + 1);
    }
    Ok(())
}

fn resolve_cohp(a: &CohpArgs) -> Result<RunConfig> {
    let mut cfg = load_config(&a.common)?;
    set_path(&mut cfg.inputs.generators, &a.generators);
    set_path(&mut cfg.inputs.checkpoint, &a.checkpoint);
    let c = &mut cfg.cohp;
    if a.models.is_some() {
        c.models = a.models;
    }
    set(&mut c.run.model_rounds, a.model_rounds);
    if let Some(s) = a.sample_rounds {
        c.run = c.run.with_sample_rounds(s);
    }
    set(&mut c.run.batch_size, a.batch);
    set(&mut c.run.denoise_schedule, a.schedule.clone());
    set(&mut c.run.seed, a.seed);
    if let Some(r) = &a.ablation_rounds {
        c.ablation.rounds = r.clone();
    }
    if c.prompts.is_empty() {
        c.prompts.push(Prompt {
            prompt_id: "prompt-0".into(),
            prompt_text: String::new(),
            category: Category::Others,
        });
    }
    Ok(cfg)
}

fn build_generators(
    spec: &GeneratorSpec,
    limit: Option<usize>,
    dir: &Path,
) -> Result<Vec<Box<dyn GeneratorPort>>> {
    let probe = random_probe(spec.dim, spec.probe_seed);
    let take = limit.unwrap_or(spec.generators.len());
    if take == 0 || take > spec.generators.len() {
        return Err(usage(format!(
            "cohp.models: asked for {take} of {} generators",
            spec.generators.len()
        )));
    }
    let mut out: Vec<Box<dyn GeneratorPort>> = Vec::with_capacity(take);
    for entry in &spec.generators[..take] {
        match entry {
            GeneratorEntry::Synthetic { name, quality, noise } => {
                let model = SyntheticModel {
                    name: name.clone(),
                    quality: *quality,
                    noise: *noise,
                };
                let g = SyntheticGenerator::new(model, probe.clone(), spec.gain)
                    .context("cohp.synthetic_generator")?
                    .with_off_probe_noise(spec.off_probe_noise);
                out.push(Box::new(g));
            }
            GeneratorEntry::Subprocess { name, command } => {
                let file = dir.join(format!("generated-{name}.prnk"));
                if file.exists() {
                    std::fs::remove_file(&file).with_context(|| format!("cohp.subprocess: {}", file.display()))?;
                }
                let file_arg = file.to_string_lossy().into_owned();
                let command: Vec<String> = command.iter().map(|c| c.replace("{embeddings}", &file_arg)).collect();
                out.push(Box::new(SubprocessGenerator::spawn(name, &command, file).context("cohp.subprocess")?));
            }
        }
    }
    Ok(out)
}

fn cohp(a: CohpArgs) -> Result<()> {
    let cfg = resolve_cohp(&a)?;
    let c = &cfg.cohp;
    c.run.validate().map_err(|e| usage(format!("cohp.validate: {e}")))?;
    let dir = out_dir(&a.common)?;
    let spec: GeneratorSpec =
        io::read_json(required(&cfg.inputs.generators, "generators")?).context("cohp.generator_spec")?;
    let head = match &cfg.inputs.checkpoint {
        Some(_) => load_head(&cfg)?,
        None => RewardHead::linear_probe(&random_probe(spec.dim, spec.probe_seed), DEFAULT_SIGMA_FLOOR)
            .context("reward.linear_probe")?,
    };
    let has_subprocess = spec
        .generators
        .iter()
        .any(|g| matches!(g, GeneratorEntry::Subprocess { .. }));
    let generators = build_generators(&spec, c.models, dir)?;
    let models: Vec<&dyn GeneratorPort> = generators.iter().map(|g| g.as_ref()).collect();

    let body = || -> Result<()> {
        let root = Rng::new(c.run.seed);
        let mut traces = Vec::with_capacity(c.prompts.len());
        for prompt in &c.prompts {
            let run = run_cohp(&models, prompt, &head, &c.run, &root.substream_named(&prompt.prompt_id))
                .with_context(|| format!("cohp.run_cohp: prompt {:?}", prompt.prompt_id))?;
            println!(
                "{}: model {} golden {} mu {:.4}",
                prompt.prompt_id, run.trace.model_wise.chosen_name, run.golden.sample_id, run.trace.golden.mu
            );
            traces.push(run.trace);
        }
        let table = round_ablation(&models, &c.prompts, &head, &c.run, &c.ablation, &root)
            .context("cohp.round_ablation")?;
        write_run_files(dir, &cfg)?;
        io::write_json(dir.join("trace.json"), &traces).context("cohp.trace")?;
        std::fs::write(dir.join("ablation.csv"), table.to_csv()).context("cohp.round_ablation")?;
        Ok(())
    };
    if has_subprocess {
        // Child processes append rows in call order, so keep that order fixed.
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build()?;
        pool.install(body)
    } else {
        body()
    }
}

fn selftest() -> Result<()> {
    let results = crate::selftest::run_all();
    let mut failed = 0;
    for check in &results {
        match &check.outcome {
            Ok(()) => println!("ok   {}", check.name),
            Err(msg) => {
                failed += 1;
                println!("FAIL {}: {msg}", check.name);
            }
        }
    }
    println!("{} checks, {} failed", results.len(), failed);
    if failed > 0 {
        anyhow::bail!("selftest: {failed} checks failed");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"trian": {}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"train": {"lr": 1}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"cohp": {"run": {"rounds": 2}}}"#).is_err());
    }

    #[test]
    fn report_rounding() {
        let v = round_report(serde_json::json!({"a": 0.123456, "b": [1, 2.00005], "c": "x"}));
        assert_eq!(v, serde_json::json!({"a": 0.1235, "b": [1, 2.0001], "c": "x"}));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(dispatch(["prefrank", "no-such-command"]), 2);
        assert_eq!(dispatch(["prefrank", "train"]), 2);
        assert_eq!(dispatch(["prefrank", "selftest"]), 0);
    }

    #[test]
    fn generator_spec_parses() {
        let spec: GeneratorSpec = serde_json::from_str(
            r#"{"dim": 4, "generators": [
                {"kind": "synthetic", "name": "a", "quality": 2.0},
                {"kind": "subprocess", "name": "b", "command": ["x", "{embeddings}"]}
            ]}"#,
        )
        .unwrap();
        assert_eq!(spec.gain, DEFAULT_GAIN);
        assert_eq!(spec.generators.len(), 2);
        assert!(serde_json::from_str::<GeneratorSpec>(
            r#"{"generators": [{"kind": "synthetic", "name": "a", "quality": 1, "q": 2}]}"#
        )
        .is_err());
    }
}
