use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ann::{Encoding, IndexParams};
use crate::error::{Error, Result};
use crate::graph::DegreeMode;
use crate::metrics::ReportConfig;
use crate::ordering::{StepRule, Strategy};
use crate::packing::PackOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbedderMode {
    BuiltinHash,
    ExternalFile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMode {
    /// IVF with product-quantized codes.
    Ivfpq,
    /// IVF with raw vectors and exact scoring.
    Ivfflat,
    /// Brute force per shard.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRuleName {
    MaxWeight,
    MinWeight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DegreeModeName {
    Dynamic,
    Static,
}

/// Every knob of a pipeline run. Missing keys take the defaults below;
/// unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Embedding dimensionality.
    pub dim: u32,
    /// Neighbors retrieved per document; also the kNN baseline group size.
    pub knn_k: u32,
    pub nlist: u32,
    /// PQ subquantizers (bytes per code).
    pub m: u32,
    pub nprobe: u32,
    pub dedup_threshold: f32,
    pub context_length: u32,
    /// Ordering written to the path and context files.
    pub strategy: Strategy,
    pub seed: u64,
    pub embedder: EmbedderMode,
    /// ICPE file read when `embedder` is `external-file`.
    pub embeddings_path: Option<PathBuf>,
    /// Embeddings per index shard.
    pub shard_size: u64,
    pub search_mode: SearchMode,
    /// Rows sampled for index training.
    pub train_sample: u64,
    pub vocab_size: u32,
    pub separator: bool,
    pub drop_last: bool,
    pub shuffle_contexts: bool,
    /// Replace retrieval scores with exact cosine before dedup and graph building.
    pub rescore: bool,
    /// Cluster count for the clustering baseline.
    pub n_clusters: u32,
    pub step_rule: StepRuleName,
    pub degree_mode: DegreeModeName,
    /// Strategies compared in the report.
    pub report_strategies: Vec<Strategy>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dim: 256,
            knn_k: 10,
            nlist: 16,
            m: 16,
            nprobe: 4,
            dedup_threshold: crate::dedup::DEFAULT_THRESHOLD,
            context_length: 2048,
            strategy: Strategy::Icp,
            seed: 0,
            embedder: EmbedderMode::BuiltinHash,
            embeddings_path: None,
            shard_size: 1_000_000,
            search_mode: SearchMode::Ivfpq,
            train_sample: 65_536,
            vocab_size: 32_000,
            separator: true,
            drop_last: true,
            shuffle_contexts: true,
            rescore: true,
            n_clusters: 16,
            step_rule: StepRuleName::MaxWeight,
            degree_mode: DegreeModeName::Dynamic,
            report_strategies: Strategy::ALL.to_vec(),
        }
    }
}

impl PipelineConfig {
    /// Settings at the scale of a 235M-document run: 768-dim embeddings,
    /// 32768 lists, 256-byte codes, 64 probes, 8192-token contexts and
    /// 50M-embedding shards.
    pub fn large_scale() -> Self {
        Self {
            dim: 768,
            nlist: 32_768,
            m: 256,
            nprobe: 64,
            context_length: 8192,
            shard_size: 50_000_000,
            train_sample: 1_572_864,
            ..Self::default()
        }
    }

    pub fn from_json(raw: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(raw).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        let cfg: Self = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<()> {
        let positive: [(&str, u64); 11] = [
            ("dim", self.dim.into()),
            ("knn_k", self.knn_k.into()),
            ("nlist", self.nlist.into()),
            ("m", self.m.into()),
            ("nprobe", self.nprobe.into()),
            ("context_length", self.context_length.into()),
            ("shard_size", self.shard_size),
            ("train_sample", self.train_sample),
            ("vocab_size", self.vocab_size.into()),
            ("n_clusters", self.n_clusters.into()),
            ("report_strategies", self.report_strategies.len() as u64),
        ];
        if let Some((key, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("`{key}` must be positive")));
        }
        if !(self.dedup_threshold > 0.0 && self.dedup_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "`dedup_threshold` must be in (0, 1], got {}",
                self.dedup_threshold
            )));
        }
        if self.nprobe > self.nlist {
            return Err(Error::Config(format!(
                "`nprobe` ({}) exceeds `nlist` ({})",
                self.nprobe, self.nlist
            )));
        }
        if self.search_mode == SearchMode::Ivfpq && !self.dim.is_multiple_of(self.m) {
            return Err(Error::Config(format!(
                "`dim` ({}) must be divisible by `m` ({})",
                self.dim, self.m
            )));
        }
        if self.context_length < 2 {
            return Err(Error::Config("`context_length` must be at least 2".into()));
        }
        if self.vocab_size < 4 {
            return Err(Error::Config("`vocab_size` must be at least 4".into()));
        }
        if self.embedder == EmbedderMode::BuiltinHash && self.dim < 8 {
            return Err(Error::Config("the hash embedder needs `dim` >= 8".into()));
        }
        if self.embedder == EmbedderMode::ExternalFile && self.embeddings_path.is_none() {
            return Err(Error::Config(
                "`embeddings_path` is required with the external-file embedder".into(),
            ));
        }
        Ok(())
    }

    pub fn index_params(&self) -> IndexParams {
        IndexParams {
            nlist: self.nlist as usize,
            m: self.m as usize,
            encoding: match self.search_mode {
                SearchMode::Ivfflat => Encoding::Flat,
                _ => Encoding::Pq,
            },
            seed: self.seed,
        }
    }

    /// Fraction of inverted lists scanned per query.
    pub fn probed_fraction(&self) -> f64 {
        f64::from(self.nprobe) / f64::from(self.nlist)
    }

    pub fn pack_options(&self) -> PackOptions {
        PackOptions {
            context_length: self.context_length as usize,
            separator: self.separator,
            drop_last: self.drop_last,
        }
    }

    pub fn report_config(&self) -> ReportConfig {
        ReportConfig {
            pack: self.pack_options(),
            seed: self.seed,
            knn_k: self.knn_k as usize,
            n_clusters: self.n_clusters as usize,
            step: match self.step_rule {
                StepRuleName::MaxWeight => StepRule::MaxWeight,
                StepRuleName::MinWeight => StepRule::MinWeight,
            },
            degree: match self.degree_mode {
                DegreeModeName::Dynamic => DegreeMode::Dynamic,
                DegreeModeName::Static => DegreeMode::Static,
            },
        }
    }
}

/// Reads and validates a JSON config file.
pub fn parse_config(path: &Path) -> Result<PipelineConfig> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    PipelineConfig::from_json(&raw)
}
