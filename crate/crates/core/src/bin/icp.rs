//! Command-line front end: one subcommand per pipeline stage plus `run`.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 when a stage fails.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use icp::corpus::corpus_stats;
use icp::pipeline::{Pipeline, PipelineConfig, Stage, StageStatus};
use icp::Error;

#[derive(Parser)]
#[command(
    name = "icp",
    version,
    about = "Order a corpus by document similarity and pack it into training contexts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize a JSONL corpus into the document store.
    Ingest(WithInput),
    /// Embed every document.
    Embed(OutOnly),
    /// Train the IVF index on a sample of the embeddings.
    Index(OutOnly),
    /// Retrieve each document's top-k neighbors across shards.
    Search(OutOnly),
    /// Remove near-duplicates and renumber survivors.
    Dedup(OutOnly),
    /// Build the symmetrized kNN document graph.
    Graph(OutOnly),
    /// Order documents with the configured strategy.
    Sort(OutOnly),
    /// Pack the ordering into fixed-length contexts.
    Pack(OutOnly),
    /// Compare strategies and print corpus statistics.
    Stats(OutOnly),
    /// Run every stage, skipping those already up to date.
    Run(WithInput),
}

#[derive(Args)]
struct OutOnly {
    /// Output directory holding all artifacts.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct WithInput {
    /// JSONL file with one `{"text": ...}` object per line.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Flags that override keys of the config file.
#[derive(Args)]
struct Overrides {
    /// JSON config file; flags below take precedence over its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// icp, knn, cluster or random.
    #[arg(long, global = true)]
    strategy: Option<String>,
    #[arg(long, global = true)]
    dim: Option<u32>,
    #[arg(long, global = true)]
    knn_k: Option<u32>,
    #[arg(long, global = true)]
    nlist: Option<u32>,
    #[arg(long, global = true)]
    m: Option<u32>,
    #[arg(long, global = true)]
    nprobe: Option<u32>,
    #[arg(long, global = true)]
    dedup_threshold: Option<f32>,
    #[arg(long, global = true)]
    context_length: Option<u32>,
    #[arg(long, global = true)]
    shard_size: Option<u64>,
    /// builtin-hash or external-file.
    #[arg(long, global = true)]
    embedder: Option<String>,
    #[arg(long, global = true)]
    embeddings_path: Option<PathBuf>,
    /// ivfpq, ivfflat or exact.
    #[arg(long, global = true)]
    search_mode: Option<String>,
    #[arg(long, global = true)]
    train_sample: Option<u64>,
    #[arg(long, global = true)]
    vocab_size: Option<u32>,
    #[arg(long, global = true)]
    n_clusters: Option<u32>,
    /// dynamic or static.
    #[arg(long, global = true)]
    degree_mode: Option<String>,
    /// Step to the lowest-weight neighbor instead of the highest.
    #[arg(long, global = true)]
    argmin: bool,
}

impl Overrides {
    fn config(&self) -> icp::Result<PipelineConfig> {
        let mut map = match &self.config {
            Some(path) => {
                let raw = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                match serde_json::from_str(&raw).map_err(|e| Error::Config(e.to_string()))? {
                    Value::Object(map) => map,
                    _ => return Err(Error::Config("config must be a JSON object".into())),
                }
            }
            None => Map::new(),
        };
        let flags = [
            ("seed", self.seed.map(|v| json!(v))),
            ("strategy", self.strategy.as_ref().map(|v| json!(v))),
            ("dim", self.dim.map(|v| json!(v))),
            ("knn_k", self.knn_k.map(|v| json!(v))),
            ("nlist", self.nlist.map(|v| json!(v))),
            ("m", self.m.map(|v| json!(v))),
            ("nprobe", self.nprobe.map(|v| json!(v))),
            ("dedup_threshold", self.dedup_threshold.map(|v| json!(v))),
            ("context_length", self.context_length.map(|v| json!(v))),
            ("shard_size", self.shard_size.map(|v| json!(v))),
            ("embedder", self.embedder.as_ref().map(|v| json!(v))),
            (
                "embeddings_path",
                self.embeddings_path.as_ref().map(|v| json!(v)),
            ),
            ("search_mode", self.search_mode.as_ref().map(|v| json!(v))),
            ("train_sample", self.train_sample.map(|v| json!(v))),
            ("vocab_size", self.vocab_size.map(|v| json!(v))),
            ("n_clusters", self.n_clusters.map(|v| json!(v))),
            ("degree_mode", self.degree_mode.as_ref().map(|v| json!(v))),
            ("step_rule", self.argmin.then(|| json!("min-weight"))),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                map.insert(key.to_string(), v);
            }
        }
        PipelineConfig::from_value(Value::Object(map))
    }
}

fn print_stage(stage: Stage, status: StageStatus) {
    let word = match status {
        StageStatus::Ran => "ran",
        StageStatus::Skipped => "skipped",
    };
    println!("{:<7} {word}", stage.name());
}

fn execute(cli: Cli) -> icp::Result<()> {
    let config = cli.overrides.config()?;
    let single = |stage: Stage, out: PathBuf| -> icp::Result<Pipeline> {
        let pipeline = Pipeline::new(config.clone(), out);
        print_stage(stage, pipeline.run_stage(stage)?);
        Ok(pipeline)
    };
    match cli.command {
        Command::Ingest(a) => {
            let pipeline = Pipeline::new(config.clone(), a.out).with_input(a.input);
            print_stage(Stage::Ingest, pipeline.run_stage(Stage::Ingest)?);
        }
        Command::Embed(a) => drop(single(Stage::Embed, a.out)?),
        Command::Index(a) => drop(single(Stage::Index, a.out)?),
        Command::Search(a) => drop(single(Stage::Search, a.out)?),
        Command::Dedup(a) => drop(single(Stage::Dedup, a.out)?),
        Command::Graph(a) => drop(single(Stage::Graph, a.out)?),
        Command::Sort(a) => drop(single(Stage::Sort, a.out)?),
        Command::Pack(a) => drop(single(Stage::Pack, a.out)?),
        Command::Stats(a) => {
            let pipeline = single(Stage::Stats, a.out)?;
            let manifest = corpus_stats(&pipeline.layout().dedup_corpus_dir())?;
            println!(
                "{}",
                serde_json::to_string_pretty(&manifest).expect("manifest serializes")
            );
            print!("{}", pipeline.report()?.to_json());
        }
        Command::Run(a) => {
            let outcome = Pipeline::new(config, a.out).with_input(a.input).run()?;
            for (stage, status) in outcome.stages {
                print_stage(stage, status);
            }
            print!("{}", outcome.report.to_json());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
