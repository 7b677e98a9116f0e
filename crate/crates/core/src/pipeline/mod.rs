//! The staged, resumable end-to-end run.
//!
//! Every stage reads and writes files under one output directory. After a
//! stage succeeds it writes a stamp holding a SHA-256 of its inputs (files
//! plus the config keys it reads) and of each output. A rerun skips any
//! stage whose stamp still matches, so deleting an artifact resumes the run
//! from the stage that produces it.

mod config;

use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::info;

pub use config::{
    parse_config, DegreeModeName, EmbedderMode, PipelineConfig, SearchMode, StepRuleName,
};

use crate::ann::{sharded_search, IvfPqIndex, NeighborList, Shard, ShardBackend};
use crate::corpus::{ingest, Corpus, TokenizerConfig, DOCUMENTS_FILE, MANIFEST_FILE, TOKENS_FILE};
use crate::dedup::{apply_keep_set, find_duplicates, write_remap};
use crate::embed::{embed_corpus, EmbeddingStore};
use crate::error::{Error, Result};
use crate::graph::{build_graph, DocumentGraph};
use crate::metrics::{order_for, strategy_report, StrategyReport};
use crate::ordering::SortedPath;
use crate::packing::{coverage_check, pack_contexts, shuffle_contexts, write_contexts};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Embed,
    Index,
    Search,
    Dedup,
    Graph,
    Sort,
    Pack,
    Stats,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Ingest,
        Stage::Embed,
        Stage::Index,
        Stage::Search,
        Stage::Dedup,
        Stage::Graph,
        Stage::Sort,
        Stage::Pack,
        Stage::Stats,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Embed => "embed",
            Stage::Index => "index",
            Stage::Search => "search",
            Stage::Dedup => "dedup",
            Stage::Graph => "graph",
            Stage::Sort => "sort",
            Stage::Pack => "pack",
            Stage::Stats => "stats",
        }
    }

    /// Config keys whose values feed into this stage's stamp.
    fn config_keys(self) -> &'static [&'static str] {
        match self {
            Stage::Ingest => &["vocab_size"],
            Stage::Embed => &["dim", "embedder", "embeddings_path"],
            Stage::Index => &["nlist", "m", "search_mode", "seed", "train_sample"],
            Stage::Search => &["knn_k", "nprobe", "shard_size", "search_mode", "rescore"],
            Stage::Dedup => &["dedup_threshold"],
            Stage::Graph => &[],
            Stage::Sort => &[
                "strategy",
                "seed",
                "knn_k",
                "n_clusters",
                "step_rule",
                "degree_mode",
            ],
            Stage::Pack => &[
                "context_length",
                "separator",
                "drop_last",
                "shuffle_contexts",
                "seed",
            ],
            Stage::Stats => &[
                "report_strategies",
                "seed",
                "knn_k",
                "n_clusters",
                "step_rule",
                "degree_mode",
                "context_length",
                "separator",
                "drop_last",
            ],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    /// Inputs and outputs matched the stamp.
    Skipped,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub report: StrategyReport,
    pub stages: Vec<(Stage, StageStatus)>,
}

/// Artifact paths under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.root.join("corpus")
    }

    pub fn embeddings(&self) -> PathBuf {
        self.root.join("embeddings.icpe")
    }

    pub fn index(&self) -> PathBuf {
        self.root.join("index.icpi")
    }

    pub fn neighbors(&self) -> PathBuf {
        self.root.join("neighbors.icpn")
    }

    pub fn dedup_dir(&self) -> PathBuf {
        self.root.join("dedup")
    }

    pub fn keep_set(&self) -> PathBuf {
        self.dedup_dir().join("keepset.txt")
    }

    pub fn remap(&self) -> PathBuf {
        self.dedup_dir().join("remap.bin")
    }

    pub fn dedup_corpus_dir(&self) -> PathBuf {
        self.dedup_dir().join("corpus")
    }

    pub fn dedup_embeddings(&self) -> PathBuf {
        self.dedup_dir().join("embeddings.icpe")
    }

    pub fn dedup_neighbors(&self) -> PathBuf {
        self.dedup_dir().join("neighbors.icpn")
    }

    pub fn graph(&self) -> PathBuf {
        self.root.join("graph.icpg")
    }

    pub fn path(&self) -> PathBuf {
        self.root.join("path.icpp")
    }

    pub fn contexts(&self) -> PathBuf {
        self.root.join("contexts.icpx")
    }

    pub fn context_spans(&self) -> PathBuf {
        self.root.join("contexts.spans.jsonl")
    }

    pub fn report_json(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn report_csv(&self) -> PathBuf {
        self.root.join("report.csv")
    }

    fn stamp(&self, stage: Stage) -> PathBuf {
        self.root
            .join("stamps")
            .join(format!("{}.json", stage.name()))
    }

    fn lock(&self) -> PathBuf {
        self.root.join(".icp.lock")
    }
}

fn corpus_files(dir: &Path) -> Vec<PathBuf> {
    [MANIFEST_FILE, TOKENS_FILE, DOCUMENTS_FILE]
        .iter()
        .map(|f| dir.join(f))
        .collect()
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct Stamp {
    inputs: String,
    /// Output path relative to the output directory → content hash.
    outputs: Vec<(String, String)>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn hash_file(hasher: &mut Sha256, path: &Path) -> Result<()> {
    let mut file = File::open(path)?;
    let mut buf = vec![0u8; 1 << 16];
    hasher.update(file.metadata()?.len().to_le_bytes());
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            return Ok(());
        }
        hasher.update(&buf[..n]);
    }
}

fn file_digest(path: &Path) -> Result<String> {
    let mut h = Sha256::new();
    hash_file(&mut h, path)?;
    Ok(hex(&h.finalize()))
}

/// Held for the duration of a run; a second concurrent run on the same
/// directory fails instead of interleaving writes.
struct OutputLock(PathBuf);

impl OutputLock {
    fn acquire(path: PathBuf) -> Result<Self> {
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::invalid(format!(
                "{} exists: another run is using this directory (delete the file if it is stale)",
                path.display()
            )))
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// A configured run over one output directory.
#[derive(Debug, Clone)]
pub struct Pipeline {
    config: PipelineConfig,
    input: Option<PathBuf>,
    layout: Layout,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            config,
            input: None,
            layout: Layout::new(out_dir),
        }
    }

    /// The JSONL file read by the ingest stage.
    pub fn with_input(mut self, input: impl Into<PathBuf>) -> Self {
        self.input = Some(input.into());
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Runs every stage in order, skipping those that are up to date.
    pub fn run(&self) -> Result<PipelineOutcome> {
        self.config.validate()?;
        fs::create_dir_all(self.layout.root())?;
        let _lock = OutputLock::acquire(self.layout.lock())?;
        let mut stages = Vec::with_capacity(Stage::ALL.len());
        for stage in Stage::ALL {
            stages.push((stage, self.run_unlocked(stage)?));
        }
        Ok(PipelineOutcome {
            report: self.report()?,
            stages,
        })
    }

    /// Runs a single stage. Its inputs must already exist.
    pub fn run_stage(&self, stage: Stage) -> Result<StageStatus> {
        self.config.validate()?;
        fs::create_dir_all(self.layout.root())?;
        let _lock = OutputLock::acquire(self.layout.lock())?;
        self.run_unlocked(stage)
    }

    /// The strategy report written by the stats stage.
    pub fn report(&self) -> Result<StrategyReport> {
        let raw = fs::read_to_string(self.layout.report_json())?;
        serde_json::from_str(&raw).map_err(|e| Error::format("report.json", e.to_string()))
    }

    fn run_unlocked(&self, stage: Stage) -> Result<StageStatus> {
        let wrap = |source: Error| Error::Stage {
            stage: stage.name(),
            artifact: self.failure_artifact(stage),
            source: Box::new(source),
        };
        let inputs = self.inputs(stage).map_err(wrap)?;
        let input_hash = self.input_hash(stage, &inputs).map_err(wrap)?;
        if self.is_fresh(stage, &input_hash) {
            info!(stage = stage.name(), "up to date, skipping");
            return Ok(StageStatus::Skipped);
        }
        info!(stage = stage.name(), "running");
        self.execute(stage).map_err(wrap)?;
        self.write_stamp(stage, input_hash).map_err(wrap)?;
        Ok(StageStatus::Ran)
    }

    fn failure_artifact(&self, stage: Stage) -> PathBuf {
        match (stage, &self.input) {
            (Stage::Ingest, Some(input)) => input.clone(),
            _ => self
                .outputs(stage)
                .into_iter()
                .next()
                .unwrap_or_else(|| self.layout.root().to_path_buf()),
        }
    }

    fn inputs(&self, stage: Stage) -> Result<Vec<PathBuf>> {
        let l = &self.layout;
        Ok(match stage {
            Stage::Ingest => vec![self
                .input
                .clone()
                .ok_or_else(|| Error::invalid("the ingest stage needs an input JSONL file"))?],
            Stage::Embed => {
                let mut v = corpus_files(&l.corpus_dir());
                if self.config.embedder == EmbedderMode::ExternalFile {
                    v.extend(self.config.embeddings_path.clone());
                }
                v
            }
            Stage::Index => vec![l.embeddings()],
            Stage::Search => match self.config.search_mode {
                SearchMode::Exact => vec![l.embeddings()],
                _ => vec![l.embeddings(), l.index()],
            },
            Stage::Dedup => {
                let mut v = corpus_files(&l.corpus_dir());
                v.extend([l.embeddings(), l.neighbors()]);
                v
            }
            Stage::Graph => vec![l.dedup_neighbors()],
            Stage::Sort => vec![l.graph(), l.dedup_neighbors(), l.dedup_embeddings()],
            Stage::Pack => {
                let mut v = corpus_files(&l.dedup_corpus_dir());
                v.push(l.path());
                v
            }
            Stage::Stats => {
                let mut v = corpus_files(&l.dedup_corpus_dir());
                v.extend([l.dedup_embeddings(), l.dedup_neighbors(), l.graph()]);
                v
            }
        })
    }

    fn outputs(&self, stage: Stage) -> Vec<PathBuf> {
        let l = &self.layout;
        match stage {
            Stage::Ingest => corpus_files(&l.corpus_dir()),
            Stage::Embed => vec![l.embeddings()],
            Stage::Index => match self.config.search_mode {
                SearchMode::Exact => vec![],
                _ => vec![l.index()],
            },
            Stage::Search => vec![l.neighbors()],
            Stage::Dedup => {
                let mut v = vec![l.keep_set(), l.remap()];
                v.extend(corpus_files(&l.dedup_corpus_dir()));
                v.extend([l.dedup_embeddings(), l.dedup_neighbors()]);
                v
            }
            Stage::Graph => vec![l.graph()],
            Stage::Sort => vec![l.path()],
            Stage::Pack => vec![l.contexts(), l.context_spans()],
            Stage::Stats => vec![l.report_json(), l.report_csv()],
        }
    }

    fn input_hash(&self, stage: Stage, inputs: &[PathBuf]) -> Result<String> {
        let mut h = Sha256::new();
        h.update(stage.name().as_bytes());
        let all = serde_json::to_value(&self.config).expect("config serializes");
        for key in stage.config_keys() {
            h.update(format!("{key}={};", all[*key]).as_bytes());
        }
        for path in inputs {
            if !path.exists() {
                return Err(Error::invalid(format!(
                    "missing input {}; run the earlier stages first",
                    path.display()
                )));
            }
            hash_file(&mut h, path)?;
        }
        Ok(hex(&h.finalize()))
    }

    fn relative(&self, path: &Path) -> String {
        path.strip_prefix(self.layout.root())
            .unwrap_or(path)
            .to_string_lossy()
            .into_owned()
    }

    fn is_fresh(&self, stage: Stage, input_hash: &str) -> bool {
        let Ok(raw) = fs::read_to_string(self.layout.stamp(stage)) else {
            return false;
        };
        let Ok(stamp) = serde_json::from_str::<Stamp>(&raw) else {
            return false;
        };
        if stamp.inputs != input_hash {
            return false;
        }
        let outputs = self.outputs(stage);
        outputs.len() == stamp.outputs.len()
            && outputs
                .iter()
                .zip(&stamp.outputs)
                .all(|(path, (name, digest))| {
                    *name == self.relative(path) && file_digest(path).is_ok_and(|d| d == *digest)
                })
    }

    fn write_stamp(&self, stage: Stage, inputs: String) -> Result<()> {
        let outputs = self
            .outputs(stage)
            .iter()
            .map(|p| Ok((self.relative(p), file_digest(p)?)))
            .collect::<Result<_>>()?;
        let path = self.layout.stamp(stage);
        fs::create_dir_all(path.parent().expect("stamp has a parent"))?;
        let stamp = Stamp { inputs, outputs };
        fs::write(
            path,
            serde_json::to_string_pretty(&stamp).expect("stamp serializes"),
        )?;
        Ok(())
    }

    fn execute(&self, stage: Stage) -> Result<()> {
        let c = &self.config;
        let l = &self.layout;
        match stage {
            Stage::Ingest => {
                let input = self.input.as_deref().expect("checked by inputs()");
                let corpus = ingest(input, &TokenizerConfig::new(c.vocab_size)?)?;
                corpus.save(&l.corpus_dir())?;
            }
            Stage::Embed => {
                let corpus = Corpus::load(&l.corpus_dir())?;
                let store = match c.embedder {
                    EmbedderMode::BuiltinHash => embed_corpus(&corpus, c.dim as usize)?,
                    EmbedderMode::ExternalFile => {
                        let path = c.embeddings_path.as_deref().expect("validated");
                        let mut store = EmbeddingStore::read(path)?;
                        if store.dim() != c.dim as usize {
                            return Err(Error::DimensionMismatch {
                                expected: c.dim as usize,
                                got: store.dim(),
                            });
                        }
                        if store.len() != corpus.len() {
                            return Err(Error::invalid(format!(
                                "{} holds {} embeddings for {} documents",
                                path.display(),
                                store.len(),
                                corpus.len()
                            )));
                        }
                        store.normalize()?;
                        store
                    }
                };
                store.write(&l.embeddings())?;
            }
            Stage::Index => {
                if c.search_mode == SearchMode::Exact {
                    return Ok(());
                }
                let store = EmbeddingStore::read(&l.embeddings())?;
                let sample_size = (c.train_sample as usize).min(store.len());
                let sample = if sample_size == store.len() {
                    store
                } else {
                    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
                    let mut ids: Vec<u32> =
                        rand::seq::index::sample(&mut rng, store.len(), sample_size)
                            .into_iter()
                            .map(|i| i as u32)
                            .collect();
                    ids.sort_unstable();
                    store.select(&ids)
                };
                IvfPqIndex::train(&sample, &c.index_params())?.write(&l.index())?;
            }
            Stage::Search => {
                let store = EmbeddingStore::read(&l.embeddings())?;
                let ids: Vec<u32> = (0..store.len() as u32).collect();
                let shards = Shard::split(&store, c.shard_size as usize);
                let index;
                let backend = match c.search_mode {
                    SearchMode::Exact => ShardBackend::Exact,
                    _ => {
                        index = IvfPqIndex::read(&l.index())?;
                        ShardBackend::Index {
                            trained: &index,
                            nprobe: c.nprobe as usize,
                        }
                    }
                };
                let mut neighbors =
                    sharded_search(&shards, &store, Some(&ids), c.knn_k as usize, backend)?;
                if c.rescore {
                    neighbors.rescore_exact(&store)?;
                }
                neighbors.write(&l.neighbors())?;
            }
            Stage::Dedup => {
                let corpus = Corpus::load(&l.corpus_dir())?;
                let store = EmbeddingStore::read(&l.embeddings())?;
                let neighbors = NeighborList::read(&l.neighbors())?;
                let keep = find_duplicates(&neighbors, c.dedup_threshold)?;
                info!(
                    removed = keep.removed.len(),
                    kept = keep.kept.len(),
                    "dedup"
                );
                let d = apply_keep_set(&corpus, &store, &neighbors, &keep)?;
                fs::create_dir_all(l.dedup_dir())?;
                keep.write(&l.keep_set())?;
                write_remap(&l.remap(), &d.remap)?;
                d.corpus.save(&l.dedup_corpus_dir())?;
                d.embeddings.write(&l.dedup_embeddings())?;
                d.neighbors.write(&l.dedup_neighbors())?;
            }
            Stage::Graph => {
                let graph = build_graph(&NeighborList::read(&l.dedup_neighbors())?)?;
                graph.write(&l.graph())?;
            }
            Stage::Sort => {
                let graph = DocumentGraph::read(&l.graph())?;
                let neighbors = NeighborList::read(&l.dedup_neighbors())?;
                let store = EmbeddingStore::read(&l.dedup_embeddings())?;
                let path = order_for(c.strategy, &store, &neighbors, &graph, &c.report_config())?;
                info!(
                    strategy = c.strategy.name(),
                    weight = path.weight.unwrap_or(0.0),
                    jumps = path.jumps.len(),
                    "ordered"
                );
                path.write(&l.path())?;
            }
            Stage::Pack => {
                let corpus = Corpus::load(&l.dedup_corpus_dir())?;
                let path = SortedPath::read(&l.path())?;
                let opts = c.pack_options();
                let (mut contexts, report) = pack_contexts(&path, &corpus, &opts)?;
                coverage_check(&contexts, &report, &corpus, &path, &opts).into_result()?;
                if c.shuffle_contexts {
                    shuffle_contexts(&mut contexts, c.seed);
                }
                write_contexts(
                    &contexts,
                    opts.context_length,
                    &l.contexts(),
                    &l.context_spans(),
                )?;
            }
            Stage::Stats => {
                let corpus = Corpus::load(&l.dedup_corpus_dir())?;
                let store = EmbeddingStore::read(&l.dedup_embeddings())?;
                let neighbors = NeighborList::read(&l.dedup_neighbors())?;
                let graph = DocumentGraph::read(&l.graph())?;
                let report = strategy_report(
                    &corpus,
                    &store,
                    &neighbors,
                    &graph,
                    &c.report_strategies,
                    &c.report_config(),
                )?;
                fs::write(l.report_json(), report.to_json())?;
                fs::write(l.report_csv(), report.to_csv())?;
            }
        }
        Ok(())
    }
}

/// Runs the whole pipeline on `input` into `out_dir`.
pub fn run_pipeline(
    config: &PipelineConfig,
    input: &Path,
    out_dir: &Path,
) -> Result<PipelineOutcome> {
    Pipeline::new(config.clone(), out_dir)
        .with_input(input)
        .run()
}
