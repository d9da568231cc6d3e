//! `flag` — the document-graph trend pipeline as subcommands.
//!
//! `gen-corpus` writes a synthetic corpus; `build-graphs` turns AMR files
//! into graph files; `label` derives trend labels from prices; `train`,
//! `eval`, and `explain` run the model; `stats` summarizes graph files.
//! Every command resolves its seed as: `--seed` flag, then the `FLAG_SEED`
//! environment variable, then the config file, and prints the resolved
//! configuration to stderr. Outputs carry no timestamps, so identical
//! inputs and seed produce byte-identical files.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use flag_core::config::{ProviderMode, RunConfig};
use flag_core::corpus::{generate_corpus, read_manifest, ManifestRecord, SyntheticCorpusSpec};
use flag_core::embed::{EmbeddingArchive, PseudoProvider};
use flag_core::explainer::{
    emit_explanation, explain, rank_sentences, ExplainConfig, ExplainTarget,
};
use flag_core::gnn::checkpoint::{load_model_file, save_model_file};
use flag_core::gnn::ModelConfig;
use flag_core::graph::{
    attach_features, build_document_graph, read_graph_file, write_graph_file, DocumentGraph,
    GraphStats,
};
use flag_core::labeling::{label_event, load_prices_file, CallEvent, Horizon, LabelRecord};
use flag_core::penman::parse_penman_document;
use flag_core::trainer::{
    emit_report, evaluate, load_docs, make_split, train, SplitItem, SplitSpec, TrainConfig,
};

#[derive(Parser)]
#[command(name = "flag", version, about = "document-graph stock-trend pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with a planted marker signal.
    GenCorpus(GenCorpusArgs),
    /// Parse AMR documents and write one graph file per document.
    BuildGraphs(BuildGraphsArgs),
    /// Summarize graph files (mean nodes, edges, degree).
    Stats(StatsArgs),
    /// Label manifest events from a price history.
    Label(LabelArgs),
    /// Train a classifier and save the best checkpoint.
    Train(TrainArgs),
    /// Score a saved checkpoint on a split.
    Eval(EvalArgs),
    /// Optimize an edge mask for one document and rank its sentences.
    Explain(ExplainArgs),
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenCorpus(args) => cmd_gen_corpus(args),
        Command::BuildGraphs(args) => cmd_build_graphs(args),
        Command::Stats(args) => cmd_stats(args),
        Command::Label(args) => cmd_label(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Explain(args) => cmd_explain(args),
    }
}

/// `--seed` flag beats `FLAG_SEED`, which beats the config file value.
fn resolve_seed(flag: Option<u64>, config_seed: u64) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("FLAG_SEED") {
        Ok(text) => text
            .parse()
            .with_context(|| format!("FLAG_SEED must be an integer, got '{text}'")),
        Err(_) => Ok(config_seed),
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => {
            RunConfig::load(p).with_context(|| format!("config '{}'", p.display()))
        }
        None => Ok(RunConfig::default()),
    }
}

fn eprint_config(cfg: &RunConfig) {
    eprintln!("resolved config:");
    for line in cfg.render().lines() {
        eprintln!("  {line}");
    }
}

#[derive(Args)]
struct GenCorpusArgs {
    /// Directory to write the corpus into.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    train: usize,
    #[arg(long, default_value_t = 32)]
    test: usize,
    /// Calendar year of the test pool; train docs land the year before.
    #[arg(long, default_value_t = 2020)]
    test_year: i32,
    #[arg(long, default_value_t = 3)]
    sentences_min: usize,
    #[arg(long, default_value_t = 6)]
    sentences_max: usize,
    #[arg(long, default_value_t = 2)]
    nodes_min: usize,
    #[arg(long, default_value_t = 6)]
    nodes_max: usize,
    /// Token planted in one sentence of every label-1 document.
    #[arg(long, default_value = "surge-marker")]
    marker: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write embeddings.flage with pseudo rows of this dimension.
    #[arg(long)]
    archive_dim: Option<usize>,
}

fn cmd_gen_corpus(args: GenCorpusArgs) -> Result<()> {
    let seed = resolve_seed(args.seed, SyntheticCorpusSpec::default().seed)?;
    let spec = SyntheticCorpusSpec {
        n_train: args.train,
        n_test: args.test,
        test_year: args.test_year,
        sentences_min: args.sentences_min,
        sentences_max: args.sentences_max,
        nodes_min: args.nodes_min,
        nodes_max: args.nodes_max,
        marker: args.marker,
        seed,
        archive_dim: args.archive_dim,
        ..SyntheticCorpusSpec::default()
    };
    eprintln!(
        "gen-corpus: {} train + {} test docs, test year {}, seed {seed}",
        spec.n_train, spec.n_test, spec.test_year
    );
    let paths = generate_corpus(&args.out, &spec)?;
    println!("manifest {}", paths.manifest.display());
    println!("prices   {}", paths.prices.display());
    println!("truth    {}", paths.truth.display());
    if let Some(a) = paths.archive {
        println!("archive  {}", a.display());
    }
    Ok(())
}

#[derive(Args)]
struct BuildGraphsArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory for the emitted `<doc_id>.flagg` files.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Embedding source: `pseudo` or `archive` (overrides the config).
    #[arg(long)]
    provider: Option<String>,
    /// Embedding archive path, required with `--provider archive`.
    #[arg(long)]
    archive: Option<PathBuf>,
    /// Embedding dimension for the pseudo provider (overrides the config).
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

fn cmd_build_graphs(args: BuildGraphsArgs) -> Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    cfg.seed = resolve_seed(args.seed, cfg.seed)?;
    if let Some(p) = &args.provider {
        cfg.provider_mode = match p.as_str() {
            "pseudo" => ProviderMode::Pseudo,
            "archive" => ProviderMode::Archive,
            other => bail!("unknown provider '{other}' (expected pseudo or archive)"),
        };
    }
    if let Some(d) = args.dim {
        cfg.provider_dim = d;
    }
    eprint_config(&cfg);
    let archive = match cfg.provider_mode {
        ProviderMode::Archive => {
            let path = args
                .archive
                .as_ref()
                .ok_or_else(|| anyhow!("--provider archive requires --archive <path>"))?;
            Some(EmbeddingArchive::read_file(path)?)
        }
        ProviderMode::Pseudo => None,
    };
    let records = read_manifest(&args.manifest)?;
    if records.is_empty() {
        bail!("manifest '{}' lists no documents", args.manifest.display());
    }
    std::fs::create_dir_all(&args.out)?;

    let threads = args.threads.max(1).min(records.len());
    let chunk = records.len().div_ceil(threads);
    let mut results: Vec<(usize, Result<GraphStats, String>)> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (t, part) in records.chunks(chunk).enumerate() {
            let base = t * chunk;
            let out_dir = args.out.as_path();
            let archive = archive.as_ref();
            let cfg = &cfg;
            handles.push(scope.spawn(move || {
                part.iter()
                    .enumerate()
                    .map(|(i, rec)| (base + i, build_one_graph(rec, cfg, archive, out_dir)))
                    .collect::<Vec<_>>()
            }));
        }
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("graph builder thread panicked"))
            .collect()
    });
    results.sort_by_key(|(i, _)| *i);

    let mut stats = Vec::new();
    let mut failures = 0usize;
    for (i, outcome) in results {
        match outcome {
            Ok(s) => stats.push(s),
            Err(message) => {
                failures += 1;
                eprintln!("error: {}: {message}", records[i].doc_id);
            }
        }
    }
    if let Some(mean) = GraphStats::mean(&stats) {
        println!("docs  nodes    edges    avg-degree");
        println!(
            "{:<5} {:<8.2} {:<8.2} {:.2}",
            stats.len(),
            mean.n_nodes,
            mean.n_edges,
            mean.avg_degree
        );
    }
    if failures > 0 {
        bail!("{failures} of {} documents failed", records.len());
    }
    Ok(())
}

fn build_one_graph(
    rec: &ManifestRecord,
    cfg: &RunConfig,
    archive: Option<&EmbeddingArchive>,
    out_dir: &Path,
) -> Result<GraphStats, String> {
    let run = || -> Result<GraphStats> {
        let text = std::fs::read_to_string(&rec.amr_path)
            .with_context(|| format!("reading '{}'", rec.amr_path.display()))?;
        let sentences = parse_penman_document(&text)?;
        let mut graph = build_document_graph(&rec.doc_id, &sentences)?;
        match archive {
            Some(a) => attach_features(&mut graph, &sentences, &a.provider_for(&rec.doc_id))?,
            None => attach_features(
                &mut graph,
                &sentences,
                &PseudoProvider::new(cfg.seed, cfg.provider_dim),
            )?,
        }
        write_graph_file(&graph, &out_dir.join(format!("{}.flagg", rec.doc_id)))?;
        Ok(GraphStats::of(&graph))
    };
    run().map_err(|e| format!("{e:#}"))
}

#[derive(Args)]
struct StatsArgs {
    /// Directory of `.flagg` files.
    #[arg(long)]
    graphs: PathBuf,
}

fn cmd_stats(args: StatsArgs) -> Result<()> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&args.graphs)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "flagg"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no .flagg files under '{}'", args.graphs.display());
    }
    let mut stats = Vec::new();
    for p in &paths {
        let graph = read_graph_file(p).with_context(|| format!("'{}'", p.display()))?;
        stats.push(GraphStats::of(&graph));
    }
    let mean = GraphStats::mean(&stats).expect("non-empty stats");
    println!("docs  nodes    edges    avg-degree");
    println!(
        "{:<5} {:<8.2} {:<8.2} {:.2}",
        stats.len(),
        mean.n_nodes,
        mean.n_edges,
        mean.avg_degree
    );
    Ok(())
}

#[derive(Args)]
struct LabelArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// `ticker,date,close` CSV.
    #[arg(long)]
    prices: PathBuf,
    /// `daily` or `weekly`.
    #[arg(long, default_value = "daily")]
    horizon: String,
    /// Output JSONL of label records.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_label(args: LabelArgs) -> Result<()> {
    let horizon: Horizon = args.horizon.parse().map_err(|e: String| anyhow!(e))?;
    let records = read_manifest(&args.manifest)?;
    let store = load_prices_file(&args.prices)?;
    let mut out = String::new();
    let mut labeled = 0usize;
    let mut dropped = 0usize;
    for rec in &records {
        let event = CallEvent {
            doc_id: rec.doc_id.clone(),
            ticker: rec.ticker.clone(),
            call_date: rec.call_date,
        };
        match label_event(&store, &event, horizon) {
            Ok(label) => {
                labeled += 1;
                let row = LabelRecord {
                    doc_id: rec.doc_id.clone(),
                    horizon,
                    label,
                };
                out.push_str(&serde_json::to_string(&row)?);
                out.push('\n');
            }
            Err(reason) => {
                dropped += 1;
                eprintln!("dropping {}: {reason}", rec.doc_id);
            }
        }
    }
    std::fs::write(&args.out, out)?;
    println!(
        "labeled {labeled} of {} events ({dropped} dropped)",
        records.len()
    );
    Ok(())
}

/// Joins manifest, labels, and graph files into split items.
fn assemble_items(
    manifest: &Path,
    labels: &Path,
    graphs: &Path,
) -> Result<Vec<SplitItem>> {
    let records = read_manifest(manifest)?;
    let mut label_of: HashMap<String, u8> = HashMap::new();
    for (i, line) in std::fs::read_to_string(labels)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: LabelRecord = serde_json::from_str(line)
            .with_context(|| format!("labels line {}", i + 1))?;
        label_of.insert(row.doc_id, row.label);
    }
    let mut items = Vec::new();
    for rec in records {
        let Some(&label) = label_of.get(&rec.doc_id) else {
            continue; // screened out at labeling time
        };
        let graph_path = graphs.join(format!("{}.flagg", rec.doc_id));
        if !graph_path.exists() {
            bail!(
                "document '{}' is labeled but has no graph at '{}'",
                rec.doc_id,
                graph_path.display()
            );
        }
        items.push(SplitItem {
            doc_id: rec.doc_id,
            graph_path,
            label,
            call_date: rec.call_date,
        });
    }
    if items.is_empty() {
        bail!("no documents carry both a label and a graph");
    }
    Ok(items)
}

/// The model dimensions come from the config, except the input width,
/// which is read off the first graph's feature matrix.
fn model_config_for(cfg: &RunConfig, first_graph: &DocumentGraph) -> Result<ModelConfig> {
    let features = first_graph
        .features
        .as_ref()
        .ok_or_else(|| anyhow!("graph '{}' has no features", first_graph.doc_id))?;
    Ok(ModelConfig {
        input_dim: features.dim,
        hidden_dim: cfg.hidden_dim,
        layers: cfg.layers,
        heads: cfg.heads,
        classes: 2,
        layer_kind: cfg.layer_kind,
        negative_slope: 0.2,
    })
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// JSONL written by `label`.
    #[arg(long)]
    labels: PathBuf,
    /// Directory of `.flagg` files from `build-graphs`.
    #[arg(long)]
    graphs: PathBuf,
    /// Output directory: checkpoint, split, per-epoch log.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's epoch budget.
    #[arg(long)]
    epochs: Option<usize>,
    /// Override the config's learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Override the config's layer kind (gatv2, gat, gcn).
    #[arg(long)]
    layer_kind: Option<String>,
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    cfg.seed = resolve_seed(args.seed, cfg.seed)?;
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if let Some(lr) = args.lr {
        cfg.lr = lr;
    }
    if let Some(kind) = &args.layer_kind {
        cfg.layer_kind = kind.parse().map_err(|e: String| anyhow!(e))?;
    }
    eprint_config(&cfg);

    let items = assemble_items(&args.manifest, &args.labels, &args.graphs)?;
    let split = make_split(
        &items,
        &SplitSpec {
            test_year_start: cfg.split_test_year,
            val_fraction: cfg.split_val_fraction,
            seed: cfg.seed,
        },
    )?;
    eprintln!(
        "split: {} train / {} validation / {} test",
        split.train.len(),
        split.validation.len(),
        split.test.len()
    );
    let first = read_graph_file(&split.train[0].graph_path)?;
    let train_config = TrainConfig {
        epochs_max: cfg.epochs,
        lr: cfg.lr,
        seed: cfg.seed,
        model: model_config_for(&cfg, &first)?,
        selection: cfg.selection,
    };
    let outcome = train::<f32>(&split, &train_config)?;

    std::fs::create_dir_all(&args.out)?;
    let ckpt = args.out.join("model.flagm");
    save_model_file(&outcome.model, &ckpt)?;
    let mut log_text = String::new();
    for entry in &outcome.log {
        log_text.push_str(&serde_json::to_string(entry)?);
        log_text.push('\n');
    }
    std::fs::write(args.out.join("train_log.jsonl"), log_text)?;
    let ids = |items: &[SplitItem]| -> Vec<String> {
        items.iter().map(|i| i.doc_id.clone()).collect()
    };
    let mut split_json = serde_json::to_string_pretty(&serde_json::json!({
        "train": ids(&split.train),
        "validation": ids(&split.validation),
        "test": ids(&split.test),
    }))?;
    split_json.push('\n');
    std::fs::write(args.out.join("split.json"), split_json)?;

    for entry in &outcome.log {
        println!(
            "epoch {:>3}  train_loss {:.6}  val_loss {:.6}  val_error {:.3}",
            entry.epoch, entry.train_loss, entry.val_loss, entry.val_error
        );
    }
    println!("best epoch {} -> {}", outcome.best_epoch, ckpt.display());
    Ok(())
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint from `train`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    graphs: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Which part to score: train, validation, test, or all.
    #[arg(long, default_value = "test")]
    split: String,
    /// Base path: writes `<out>.json` and `<out>.txt`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    cfg.seed = resolve_seed(args.seed, cfg.seed)?;
    eprint_config(&cfg);
    let items = assemble_items(&args.manifest, &args.labels, &args.graphs)?;
    let split = make_split(
        &items,
        &SplitSpec {
            test_year_start: cfg.split_test_year,
            val_fraction: cfg.split_val_fraction,
            seed: cfg.seed,
        },
    )?;
    let part: Vec<SplitItem> = match args.split.as_str() {
        "train" => split.train,
        "validation" => split.validation,
        "test" => split.test,
        "all" => {
            let mut all = split.train;
            all.extend(split.validation);
            all.extend(split.test);
            all
        }
        other => bail!("unknown split '{other}' (expected train, validation, test, or all)"),
    };
    if part.is_empty() {
        bail!("split '{}' holds no documents", args.split);
    }
    let model = load_model_file::<f32>(&args.model)?;
    let docs = load_docs(&part)?;
    let report = evaluate(&model, &docs)?;
    print!("{}", report.render_text());
    if let Some(base) = args.out {
        let json = base.with_extension("json");
        let text = base.with_extension("txt");
        emit_report(&report, &json, &text)?;
        eprintln!("wrote {} and {}", json.display(), text.display());
    }
    Ok(())
}

#[derive(Args)]
struct ExplainArgs {
    /// One `.flagg` graph file.
    #[arg(long)]
    graph: PathBuf,
    /// Checkpoint from `train`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 3)]
    hops: usize,
    #[arg(long, default_value_t = 1000)]
    epochs: usize,
    #[arg(long, default_value_t = 5)]
    top_k: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Sparsity coefficient on mask weights.
    #[arg(long, default_value_t = 0.005)]
    sparsity: f64,
    /// Binary-entropy coefficient on mask weights.
    #[arg(long, default_value_t = 0.1)]
    entropy: f64,
    /// Explain this class instead of the model's own prediction.
    #[arg(long)]
    class: Option<usize>,
    /// AMR document supplying sentence texts for the report.
    #[arg(long)]
    amr: Option<PathBuf>,
    /// Base path: writes `<out>.json` and `<out>.txt`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_explain(args: ExplainArgs) -> Result<()> {
    let seed = resolve_seed(args.seed, ExplainConfig::default().seed)?;
    let config = ExplainConfig {
        hops: args.hops,
        epochs: args.epochs,
        lr: 1e-2,
        sparsity: args.sparsity,
        entropy: args.entropy,
        seed,
        target: match args.class {
            Some(c) => ExplainTarget::Class(c),
            None => ExplainTarget::Predicted,
        },
    };
    eprintln!(
        "explain: hops {} epochs {} sparsity {} entropy {} seed {seed}",
        config.hops, config.epochs, config.sparsity, config.entropy
    );
    let graph = read_graph_file(&args.graph)?;
    let model = load_model_file::<f32>(&args.model)?;
    let explanation = explain(&graph, &model, &config)?;
    let ranking = rank_sentences(&explanation.mask, &graph);
    let texts: Vec<String> = match &args.amr {
        Some(path) => {
            let sentences = parse_penman_document(&std::fs::read_to_string(path)?)?;
            sentences.iter().map(|s| s.tokens.join(" ")).collect()
        }
        None => vec![String::new(); graph.n_sentences],
    };
    println!(
        "document {} explained for class {}",
        graph.doc_id, explanation.target_class
    );
    for (i, e) in ranking.entries.iter().take(args.top_k).enumerate() {
        let text = texts.get(e.sentence).filter(|t| !t.is_empty());
        println!(
            "{:>2}. sentence {:>3}  weight {:.3}  {}",
            i + 1,
            e.sentence,
            e.importance,
            text.map_or("", |t| t.as_str())
        );
    }
    if let Some(base) = args.out {
        let json = base.with_extension("json");
        let text = base.with_extension("txt");
        emit_explanation(&ranking, &texts, args.top_k.max(1), &json, &text)?;
        eprintln!("wrote {} and {}", json.display(), text.display());
    }
    Ok(())
}
