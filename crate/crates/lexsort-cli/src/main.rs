//! `lexsort` — reproducible document-classification pipelines.
//!
//! Exit codes: 0 success, 1 validation/usage error, 2 runtime error.
//! Every successful run writes a JSON manifest (command, resolved config,
//! seeds, artifacts, version, duration) sufficient to re-execute it.

mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use lexsort_core::corpus::{
    self, generate_corpus, inject_label_noise, load_jsonl, save_jsonl, CorpusSpec,
    SignaturePosition, Task,
};
use lexsort_core::ensemble::{load_bundle, save_bundle, train_ensemble, EnsembleConfig};
use lexsort_core::error::Error;
use lexsort_core::eval::{
    default_window_grid, emit_report, evaluate, hpo_context_window, learning_curve, BowSimTrainer,
    ReportFormat, ReportKind, ReportMeta,
};
use lexsort_core::explain::{
    render_overlay, shapley_exact, shapley_sampled, OverlayFormat, EXACT_TOKEN_LIMIT,
};
use lexsort_core::llm::{
    build_finetune_file, classify_remote, mock::MockServer, mock::ScriptStep, LlmConfig,
};

use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "lexsort", version, about = "Two-level legal document classification: synthetic corpora, n-gram ensembles, Shapley attributions, and LLM comparison pipelines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    Binary,
    Multiclass,
}

impl From<TaskArg> for Task {
    fn from(value: TaskArg) -> Self {
        match value {
            TaskArg::Binary => Task::Binary,
            TaskArg::Multiclass => Task::MultiClass,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for ReportFormat {
    fn from(value: FormatArg) -> Self {
        match value {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled corpus as JSONL.
    Generate(GenerateArgs),
    /// Train the two-branch ensemble and write a model bundle.
    Train(TrainArgs),
    /// Score a bundle against a JSONL test set and emit a metrics report.
    Evaluate(EvaluateArgs),
    /// Context-window grid search; emits the per-window accuracy table.
    Hpo(HpoArgs),
    /// Shapley token attribution for one document, rendered as an overlay.
    Explain(ExplainArgs),
    /// Chat-completion classification against a remote or mock endpoint.
    #[command(subcommand)]
    Llm(LlmCommand),
    /// Fine-tuning learning curve over subset sizes and seeds.
    Curve(CurveArgs),
    /// Serve a scripted chat-completion endpoint for offline runs.
    MockServe(MockServeArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Number of documents (mirrors n_documents).
    #[arg(long = "n", visible_alias = "n-documents")]
    n: Option<usize>,
    /// Label-noise rate applied after generation (mirrors noise_rate).
    #[arg(long = "noise", visible_alias = "noise-rate")]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Shortest document, in tokens.
    #[arg(long)]
    min_tokens: Option<usize>,
    /// Longest document, in tokens.
    #[arg(long)]
    max_tokens: Option<usize>,
    #[arg(long)]
    boilerplate_vocab_size: Option<usize>,
    /// Plant signature phrases only at or after this token offset.
    #[arg(long)]
    signature_after: Option<usize>,
    /// JSON file holding a full corpus spec; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum)]
    task: TaskArg,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    hidden_size: Option<usize>,
    #[arg(long)]
    d_embed: Option<usize>,
    #[arg(long)]
    n_filters: Option<usize>,
    #[arg(long)]
    kernel_width: Option<usize>,
    #[arg(long)]
    n_min: Option<usize>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    min_doc_freq: Option<u32>,
    #[arg(long)]
    max_vocab: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    cnn_epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    cnn_learning_rate: Option<f64>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Train/val/test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.76, 0.12, 0.12])]
    split: Vec<f64>,
    #[arg(long)]
    split_seed: Option<u64>,
    /// JSON file holding a full ensemble config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Score against observed (possibly noisy) or true labels.
    #[arg(long, value_enum, default_value = "observed")]
    against: TruthArg,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    /// Label-noise rate of the corpus, for the noise-ceiling reference line.
    #[arg(long)]
    noise_rate: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TruthArg {
    Observed,
    True,
}

#[derive(Args)]
struct HpoArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum)]
    task: TaskArg,
    /// Ascending window grid; defaults to the task's standard grid.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.76, 0.12, 0.12])]
    split: Vec<f64>,
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    hidden_size: Option<usize>,
    #[arg(long)]
    d_embed: Option<usize>,
    #[arg(long)]
    n_filters: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    cnn_epochs: Option<usize>,
    #[arg(long)]
    min_doc_freq: Option<u32>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    doc_id: String,
    /// Canonical label name to attribute; defaults to the predicted label.
    #[arg(long)]
    target: Option<String>,
    #[arg(long, value_enum, default_value = "auto")]
    method: MethodArg,
    #[arg(long, default_value_t = 2000)]
    permutations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "ansi")]
    format: OverlayArg,
    /// Output file; required for html, optional for ansi (stdout otherwise).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Exact,
    Sampled,
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum OverlayArg {
    Ansi,
    Html,
}

#[derive(Subcommand)]
enum LlmCommand {
    /// Classify a JSONL corpus through a chat-completion endpoint.
    Classify(LlmClassifyArgs),
    /// Write a chat-format fine-tuning file from a labeled corpus.
    BuildFinetune(BuildFinetuneArgs),
}

#[derive(Args)]
struct LlmClassifyArgs {
    #[arg(long)]
    base_url: String,
    #[arg(long)]
    model: String,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum)]
    task: TaskArg,
    #[arg(long, default_value_t = 800)]
    window: usize,
    #[arg(long, default_value_t = 4)]
    max_parallel: usize,
    #[arg(long, default_value_t = 30)]
    timeout_secs: u64,
    #[arg(long, default_value_t = 3)]
    max_attempts: usize,
    #[arg(long, default_value_t = 250)]
    backoff_ms: u64,
    /// Require exact canonical label strings instead of lenient matching.
    #[arg(long)]
    strict_parse: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct BuildFinetuneArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum)]
    task: TaskArg,
    #[arg(long, default_value_t = 800)]
    window: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct CurveArgs {
    /// Fine-tuning pool (JSONL).
    #[arg(long)]
    pool: PathBuf,
    /// Fixed test set (JSONL).
    #[arg(long)]
    test: PathBuf,
    #[arg(long, value_enum, default_value = "binary")]
    task: TaskArg,
    #[arg(long, value_delimiter = ',', default_values_t = [200usize, 600, 900, 1200, 2000])]
    sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [1u64, 2, 3])]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 200)]
    window: usize,
    #[arg(long, default_value_t = 32)]
    hidden_size: usize,
    #[arg(long, default_value_t = 8)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    trainer_seed: u64,
    #[arg(long)]
    noise_rate: Option<f64>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct MockServeArgs {
    /// JSON file: a list of scripted responses, e.g.
    /// `[{"reply": {"content": "Other"}}, {"status": {"code": 500}}]`.
    #[arg(long)]
    script: PathBuf,
    #[arg(long, default_value_t = 0)]
    port: u16,
}

fn read_json_file<T: DeserializeOwned>(path: &PathBuf) -> Result<T, Error> {
    let contents =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&contents)
        .map_err(|e| Error::validation("config", format!("{}: {e}", path.display())))
}

fn resolve_corpus_spec(args: &GenerateArgs) -> Result<CorpusSpec, Error> {
    let mut spec = match &args.config {
        Some(path) => read_json_file::<CorpusSpec>(path)?,
        None => CorpusSpec::default(),
    };
    if let Some(n) = args.n {
        spec.n_documents = n;
    }
    if let Some(noise) = args.noise {
        spec.noise_rate = noise;
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(min) = args.min_tokens {
        spec.doc_length_range.0 = min;
    }
    if let Some(max) = args.max_tokens {
        spec.doc_length_range.1 = max;
    }
    if let Some(size) = args.boilerplate_vocab_size {
        spec.boilerplate_vocab_size = size;
    }
    if let Some(offset) = args.signature_after {
        spec.signature_position = SignaturePosition::AfterOffset(offset);
    }
    Ok(spec)
}

fn resolve_ensemble_config(
    config: &Option<PathBuf>,
    task: Task,
    window: Option<usize>,
    hidden_size: Option<usize>,
    d_embed: Option<usize>,
    n_filters: Option<usize>,
    kernel_width: Option<usize>,
    n_min: Option<usize>,
    n_max: Option<usize>,
    min_doc_freq: Option<u32>,
    max_vocab: Option<usize>,
    epochs: Option<usize>,
    cnn_epochs: Option<usize>,
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
    cnn_learning_rate: Option<f64>,
    l2: Option<f64>,
    seed: Option<u64>,
) -> Result<EnsembleConfig, Error> {
    let mut cfg = match config {
        Some(path) => read_json_file::<EnsembleConfig>(path)?,
        None => EnsembleConfig::for_task(task),
    };
    cfg.task = task;
    if let Some(v) = window {
        cfg.window = v;
    }
    if let Some(v) = hidden_size {
        cfg.hidden_size = v;
    }
    if let Some(v) = d_embed {
        cfg.d_embed = v;
    }
    if let Some(v) = n_filters {
        cfg.n_filters = v;
    }
    if let Some(v) = kernel_width {
        cfg.kernel_width = v;
    }
    if let Some(v) = n_min {
        cfg.n_min = v;
    }
    if let Some(v) = n_max {
        cfg.n_max = v;
    }
    if let Some(v) = min_doc_freq {
        cfg.min_doc_freq = v;
    }
    if let Some(v) = max_vocab {
        cfg.max_vocab = v;
    }
    if let Some(v) = epochs {
        cfg.epochs = v;
    }
    if let Some(v) = cnn_epochs {
        cfg.cnn_epochs = v;
    }
    if let Some(v) = batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = cnn_learning_rate {
        cfg.cnn_learning_rate = v;
    }
    if let Some(v) = l2 {
        cfg.l2 = v;
    }
    if let Some(v) = seed {
        cfg.seed = v;
    }
    Ok(cfg)
}

fn split_fractions(split: &[f64]) -> Result<(f64, f64, f64), Error> {
    match split {
        [a, b, c] => Ok((*a, *b, *c)),
        other => Err(Error::validation(
            "split",
            format!("expected 3 fractions, got {}", other.len()),
        )),
    }
}

fn run_generate(args: GenerateArgs) -> Result<RunManifest, Error> {
    let spec = resolve_corpus_spec(&args)?;
    let dataset = generate_corpus(&spec)?;
    let dataset = if spec.noise_rate > 0.0 {
        inject_label_noise(&dataset, spec.noise_rate, spec.seed)?
    } else {
        dataset
    };
    save_jsonl(&dataset, &args.out)?;
    println!(
        "wrote {} documents to {} (noise rate {})",
        dataset.len(),
        args.out.display(),
        spec.noise_rate
    );
    Ok(RunManifest::new("generate")
        .config(serde_json::to_value(&spec)?)
        .seeds(vec![spec.seed])
        .artifact(&args.out)
        .manifest_path(args.manifest))
}

fn run_train(args: TrainArgs) -> Result<RunManifest, Error> {
    let cfg = resolve_ensemble_config(
        &args.config,
        args.task.into(),
        args.window,
        args.hidden_size,
        args.d_embed,
        args.n_filters,
        args.kernel_width,
        args.n_min,
        args.n_max,
        args.min_doc_freq,
        args.max_vocab,
        args.epochs,
        args.cnn_epochs,
        args.batch_size,
        args.learning_rate,
        args.cnn_learning_rate,
        args.l2,
        args.seed,
    )?;
    let fractions = split_fractions(&args.split)?;
    let split_seed = args.split_seed.unwrap_or(cfg.seed);

    let dataset = load_jsonl(&args.corpus)?;
    let (train, val, test) = corpus::split(&dataset, fractions, split_seed)?;
    eprintln!(
        "training on {} documents, validating on {}, holding out {}",
        train.len(),
        val.len(),
        test.len()
    );
    let (bundle, history) = train_ensemble(&train, &val, &cfg)?;
    save_bundle(&bundle, &args.out)?;
    println!(
        "bundle written to {} (alpha {}, val accuracy {:.4})",
        args.out.display(),
        history.chosen_alpha,
        history.val_accuracy
    );

    Ok(RunManifest::new("train")
        .config(serde_json::json!({
            "corpus": args.corpus.display().to_string(),
            "ensemble": cfg,
            "split": { "fractions": [fractions.0, fractions.1, fractions.2], "seed": split_seed },
            "history": history,
        }))
        .seeds(vec![cfg.seed, split_seed])
        .artifact(&args.out)
        .manifest_path(args.manifest))
}

fn run_evaluate(args: EvaluateArgs) -> Result<RunManifest, Error> {
    let bundle = load_bundle(&args.bundle)?;
    let dataset = load_jsonl(&args.corpus)?;
    let against_true = args.against == TruthArg::True;

    let mut predictions = Vec::new();
    let mut truths = Vec::new();
    let mut skipped = 0usize;
    for doc in &dataset.documents {
        let truth = if against_true { doc.true_label } else { doc.observed_label };
        if truth.task_index(bundle.task).is_none() {
            skipped += 1;
            continue;
        }
        predictions.push(Some(bundle.predict(doc)?.label));
        truths.push(truth);
    }
    if skipped > 0 {
        eprintln!("skipped {skipped} documents whose labels do not decide the {} task", bundle.task);
    }
    let metrics = evaluate(&predictions, &truths, bundle.task)?;
    let meta = ReportMeta {
        task: bundle.task,
        noise_rate: args.noise_rate,
    };
    emit_report(ReportKind::Metrics(&metrics), &meta, args.format.into(), &args.out)?;
    println!(
        "accuracy {:.4} on {} documents ({} invalid predictions); report at {}",
        metrics.accuracy,
        metrics.n,
        metrics.invalid_count,
        args.out.display()
    );
    if let Some(rate) = metrics.false_positive_rate {
        println!("false-positive rate {rate:.4}");
    }

    Ok(RunManifest::new("evaluate")
        .config(serde_json::json!({
            "bundle": args.bundle.display().to_string(),
            "corpus": args.corpus.display().to_string(),
            "against": if against_true { "true" } else { "observed" },
            "noise_rate": args.noise_rate,
            "format": match args.format { FormatArg::Json => "json", FormatArg::Csv => "csv" },
        }))
        .artifact(&args.out)
        .manifest_path(args.manifest))
}

fn run_hpo(args: HpoArgs) -> Result<RunManifest, Error> {
    let task: Task = args.task.into();
    let cfg = resolve_ensemble_config(
        &args.config,
        task,
        None,
        args.hidden_size,
        args.d_embed,
        args.n_filters,
        None,
        None,
        None,
        args.min_doc_freq,
        None,
        args.epochs,
        args.cnn_epochs,
        None,
        None,
        None,
        None,
        args.seed,
    )?;
    let grid = args.grid.clone().unwrap_or_else(|| default_window_grid(task));
    let fractions = split_fractions(&args.split)?;
    let split_seed = args.split_seed.unwrap_or(cfg.seed);

    let dataset = load_jsonl(&args.corpus)?;
    let (train, val, _) = corpus::split(&dataset, fractions, split_seed)?;
    let result = hpo_context_window(&grid, &train, &val, &cfg)?;
    let meta = ReportMeta {
        task,
        noise_rate: None,
    };
    emit_report(ReportKind::Hpo(&result), &meta, args.format.into(), &args.out)?;
    println!(
        "chosen window {} (accuracies {:?}); report at {}",
        result.chosen_window,
        result.val_accuracy,
        args.out.display()
    );

    Ok(RunManifest::new("hpo")
        .config(serde_json::json!({
            "corpus": args.corpus.display().to_string(),
            "grid": grid,
            "ensemble": cfg,
            "split": { "fractions": [fractions.0, fractions.1, fractions.2], "seed": split_seed },
            "chosen_window": result.chosen_window,
        }))
        .seeds(vec![cfg.seed, split_seed])
        .artifact(&args.out)
        .manifest_path(args.manifest))
}

fn run_explain(args: ExplainArgs) -> Result<RunManifest, Error> {
    let bundle = load_bundle(&args.bundle)?;
    let dataset = load_jsonl(&args.corpus)?;
    let doc = dataset
        .documents
        .iter()
        .find(|d| d.id == args.doc_id)
        .ok_or_else(|| {
            Error::validation("doc_id", format!("{:?} not found in the corpus", args.doc_id))
        })?;

    let target = match &args.target {
        None => {
            let predicted = bundle.predict(doc)?;
            predicted
                .label
                .task_index(bundle.task)
                .expect("predicted labels decide their task")
        }
        Some(name) => {
            use lexsort_core::llm::{parse_label, ParsedLabel};
            match parse_label(name, bundle.task) {
                ParsedLabel::Valid(label) => label
                    .task_index(bundle.task)
                    .ok_or_else(|| Error::validation("target", "label does not decide the task"))?,
                ParsedLabel::Invalid(_) => {
                    return Err(Error::validation(
                        "target",
                        format!("{name:?} is not a {} label", bundle.task),
                    ))
                }
            }
        }
    };

    let window_tokens = lexsort_core::explain::attribution_window(&bundle, doc)?.len();
    let use_exact = match args.method {
        MethodArg::Exact => true,
        MethodArg::Sampled => false,
        MethodArg::Auto => window_tokens <= EXACT_TOKEN_LIMIT,
    };
    let attribution = if use_exact {
        eprintln!("exact enumeration over {window_tokens} tokens");
        shapley_exact(&bundle, doc, target)?
    } else {
        eprintln!(
            "sampled estimation over {window_tokens} tokens ({} permutations, seed {})",
            args.permutations, args.seed
        );
        shapley_sampled(&bundle, doc, target, args.permutations, args.seed)?
    };

    let format = match args.format {
        OverlayArg::Ansi => OverlayFormat::Ansi,
        OverlayArg::Html => OverlayFormat::Html,
    };
    let overlay = render_overlay(doc, &attribution, format)?;
    let mut manifest = RunManifest::new("explain")
        .config(serde_json::json!({
            "bundle": args.bundle.display().to_string(),
            "corpus": args.corpus.display().to_string(),
            "doc_id": args.doc_id,
            "target_index": target,
            "method": if use_exact { "exact" } else { "sampled" },
            "permutations": if use_exact { None } else { Some(args.permutations) },
            "baseline_value": attribution.baseline_value,
            "full_value": attribution.full_value,
        }))
        .seeds(vec![args.seed]);
    match (&args.out, args.format) {
        (Some(path), _) => {
            std::fs::write(path, &overlay).map_err(|e| Error::io(path.display().to_string(), e))?;
            eprintln!("overlay written to {}", path.display());
            manifest = manifest.artifact(path);
        }
        (None, OverlayArg::Ansi) => println!("{overlay}"),
        (None, OverlayArg::Html) => {
            return Err(Error::validation("out", "html output requires --out"))
        }
    }
    Ok(manifest.manifest_path(args.manifest))
}

fn run_llm_classify(args: LlmClassifyArgs) -> Result<RunManifest, Error> {
    let task: Task = args.task.into();
    let config = LlmConfig {
        max_parallel: args.max_parallel,
        timeout: std::time::Duration::from_secs(args.timeout_secs),
        max_attempts: args.max_attempts,
        backoff_base: std::time::Duration::from_millis(args.backoff_ms),
        window: args.window,
        strict_parse: args.strict_parse,
        ..LlmConfig::new(args.base_url.clone(), args.model.clone())
    };
    let dataset = load_jsonl(&args.corpus)?;
    let outcomes = classify_remote(&config, &dataset.documents, task)?;

    // Score the outcomes against observed labels where those decide the task.
    let mut predictions = Vec::new();
    let mut truths = Vec::new();
    for (doc, outcome) in dataset.documents.iter().zip(&outcomes) {
        if doc.observed_label.task_index(task).is_some() {
            predictions.push(outcome.parsed.valid());
            truths.push(doc.observed_label);
        }
    }
    let metrics = if truths.is_empty() {
        None
    } else {
        Some(evaluate(&predictions, &truths, task)?)
    };

    let report = serde_json::json!({
        "outcomes": outcomes,
        "metrics": metrics,
    });
    let file =
        std::fs::File::create(&args.out).map_err(|e| Error::io(args.out.display().to_string(), e))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &report)?;
    let invalid = outcomes.iter().filter(|o| o.parsed.valid().is_none()).count();
    println!(
        "classified {} documents ({} invalid outcomes); report at {}",
        outcomes.len(),
        invalid,
        args.out.display()
    );
    if let Some(m) = &metrics {
        println!("accuracy {:.4}", m.accuracy);
    }

    Ok(RunManifest::new("llm classify")
        .config(serde_json::json!({
            "base_url": args.base_url,
            "model": args.model,
            "corpus": args.corpus.display().to_string(),
            "task": task,
            "window": args.window,
            "max_parallel": args.max_parallel,
            "max_attempts": args.max_attempts,
            "strict_parse": args.strict_parse,
        }))
        .artifact(&args.out)
        .manifest_path(args.manifest))
}

fn run_build_finetune(args: BuildFinetuneArgs) -> Result<RunManifest, Error> {
    let task: Task = args.task.into();
    let dataset = load_jsonl(&args.corpus)?;
    let usable = match task {
        Task::Binary => dataset.clone(),
        Task::MultiClass => {
            let filtered = dataset.with_observed_subclass();
            let dropped = dataset.len() - filtered.len();
            if dropped > 0 {
                eprintln!("dropped {dropped} documents without a subclass label");
            }
            filtered
        }
    };
    let count = build_finetune_file(&usable, task, args.window, &args.out)?;
    println!("wrote {count} fine-tune records to {}", args.out.display());

    Ok(RunManifest::new("llm build-finetune")
        .config(serde_json::json!({
            "corpus": args.corpus.display().to_string(),
            "task": task,
            "window": args.window,
            "records": count,
        }))
        .artifact(&args.out)
        .manifest_path(args.manifest))
}

fn run_curve(args: CurveArgs) -> Result<RunManifest, Error> {
    let task: Task = args.task.into();
    let pool = load_jsonl(&args.pool)?;
    let test = load_jsonl(&args.test)?;
    let trainer = BowSimTrainer {
        task,
        window: args.window,
        hidden_size: args.hidden_size,
        epochs: args.epochs,
        seed: args.trainer_seed,
    };
    let points = learning_curve(&args.sizes, &args.seeds, &trainer, &pool, &test)?;
    let meta = ReportMeta {
        task,
        noise_rate: args.noise_rate,
    };
    emit_report(ReportKind::Curve(&points), &meta, args.format.into(), &args.out)?;
    for p in &points {
        println!(
            "n={} mean {:.4} (std {:.4}, {} seeds)",
            p.n_finetune_docs, p.mean_accuracy, p.std_accuracy, p.n_seeds
        );
    }
    println!("curve report at {}", args.out.display());

    Ok(RunManifest::new("curve")
        .config(serde_json::json!({
            "pool": args.pool.display().to_string(),
            "test": args.test.display().to_string(),
            "task": task,
            "sizes": args.sizes,
            "seeds": args.seeds,
            "trainer": {
                "kind": "bow-sim",
                "window": args.window,
                "hidden_size": args.hidden_size,
                "epochs": args.epochs,
                "seed": args.trainer_seed,
            },
        }))
        .seeds(args.seeds.clone())
        .artifact(&args.out)
        .manifest_path(args.manifest))
}

fn run_mock_serve(args: MockServeArgs) -> Result<RunManifest, Error> {
    let script: Vec<ScriptStep> = read_json_file(&args.script)?;
    let server = MockServer::start_on(script, args.port)?;
    println!("mock chat-completion endpoint at {}", server.url());
    println!("POST {}/v1/chat/completions — press Ctrl-C to stop", server.url());
    loop {
        std::thread::sleep(std::time::Duration::from_secs(3600));
    }
}

fn dispatch(command: Command, started: Instant, argv: &[String]) -> Result<(), Error> {
    let manifest = match command {
        Command::Generate(args) => run_generate(args)?,
        Command::Train(args) => run_train(args)?,
        Command::Evaluate(args) => run_evaluate(args)?,
        Command::Hpo(args) => run_hpo(args)?,
        Command::Explain(args) => run_explain(args)?,
        Command::Llm(LlmCommand::Classify(args)) => run_llm_classify(args)?,
        Command::Llm(LlmCommand::BuildFinetune(args)) => run_build_finetune(args)?,
        Command::Curve(args) => run_curve(args)?,
        Command::MockServe(args) => run_mock_serve(args)?,
    };
    manifest.finalize(argv, started)
}

fn main() -> ExitCode {
    let started = Instant::now();
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command, started, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
