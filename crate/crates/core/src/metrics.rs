//! Ordering quality metrics and side-by-side strategy reports.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ann::NeighborList;
use crate::corpus::Corpus;
use crate::embed::{cosine_with_norms, EmbeddingStore};
use crate::error::{Error, Result};
use crate::graph::DocumentGraph;
use crate::graph::{DegreeMode, TieBreak};
use crate::ordering::{
    cluster_order, knn_sequence, random_order, tsp_path, GroupOrder, SortedPath, StepRule,
    Strategy, TspOptions,
};
use crate::packing::{coverage_check, pack_contexts, PackOptions, PackedContext};

/// Mean pairwise cosine among the distinct documents of each context,
/// averaged over contexts holding at least two documents.
pub fn intra_context_similarity(
    contexts: &[PackedContext],
    embeddings: &EmbeddingStore,
) -> Result<f64> {
    let norms = embeddings.norms();
    let per_context: Vec<Option<f64>> = contexts
        .par_iter()
        .map(|c| {
            let docs: BTreeSet<u32> = c.spans.iter().map(|s| s.doc).collect();
            if let Some(&bad) = docs.iter().find(|&&d| d as usize >= embeddings.len()) {
                return Err(Error::UnknownId(bad));
            }
            if docs.len() < 2 {
                return Ok(None);
            }
            let docs: Vec<usize> = docs.into_iter().map(|d| d as usize).collect();
            let mut sum = 0f64;
            let mut pairs = 0usize;
            for (i, &a) in docs.iter().enumerate() {
                for &b in &docs[i + 1..] {
                    sum += f64::from(cosine_with_norms(
                        embeddings.row(a),
                        norms[a],
                        embeddings.row(b),
                        norms[b],
                    ));
                    pairs += 1;
                }
            }
            Ok(Some(sum / pairs as f64))
        })
        .collect::<Result<_>>()?;
    let included: Vec<f64> = per_context.into_iter().flatten().collect();
    if included.is_empty() {
        return Err(Error::invalid(
            "no context holds two distinct documents; similarity is undefined",
        ));
    }
    Ok(included.iter().sum::<f64>() / included.len() as f64)
}

/// `1 - distinct / total` over a document-occurrence sequence.
pub fn repetition_rate(order: &[u32]) -> f64 {
    if order.is_empty() {
        return 0.0;
    }
    let distinct: HashSet<u32> = order.iter().copied().collect();
    1.0 - distinct.len() as f64 / order.len() as f64
}

/// Settings shared by every strategy in a report.
#[derive(Debug, Clone)]
pub struct ReportConfig {
    pub pack: PackOptions,
    pub seed: u64,
    /// Group size for the kNN baseline.
    pub knn_k: usize,
    pub n_clusters: usize,
    pub step: StepRule,
    pub degree: DegreeMode,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            pack: PackOptions::default(),
            seed: 0,
            knn_k: 10,
            n_clusters: 16,
            step: StepRule::MaxWeight,
            degree: DegreeMode::Dynamic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyMetrics {
    pub intra_context_similarity: f64,
    pub repetition_rate: f64,
    pub path_weight: f64,
    pub context_count: usize,
    pub dropped_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StrategyOutcome {
    Ok(StrategyMetrics),
    Failed { failed: String },
}

/// Strategy name → metrics. Serializes with sorted keys.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StrategyReport {
    pub strategies: BTreeMap<String, StrategyOutcome>,
}

impl StrategyReport {
    pub fn get(&self, strategy: Strategy) -> Option<&StrategyMetrics> {
        match self.strategies.get(strategy.name()) {
            Some(StrategyOutcome::Ok(m)) => Some(m),
            _ => None,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// One row per strategy; failed strategies carry the error in the last column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "strategy,intra_context_similarity,repetition_rate,path_weight,context_count,dropped_tokens,error\n",
        );
        for (name, outcome) in &self.strategies {
            match outcome {
                StrategyOutcome::Ok(m) => out.push_str(&format!(
                    "{name},{},{},{},{},{},\n",
                    m.intra_context_similarity,
                    m.repetition_rate,
                    m.path_weight,
                    m.context_count,
                    m.dropped_tokens
                )),
                StrategyOutcome::Failed { failed } => {
                    out.push_str(&format!("{name},,,,,,\"{}\"\n", failed.replace('"', "'")))
                }
            }
        }
        out
    }
}

/// Produces the ordering for one strategy.
pub fn order_for(
    strategy: Strategy,
    embeddings: &EmbeddingStore,
    neighbors: &NeighborList,
    graph: &DocumentGraph,
    config: &ReportConfig,
) -> Result<SortedPath> {
    let mut path = match strategy {
        Strategy::Icp => tsp_path(
            graph,
            &TspOptions {
                step: config.step,
                degree: config.degree,
                tie_break: TieBreak::seeded(config.seed),
            },
        )?,
        Strategy::Random => {
            let ids: Vec<u32> = (0..graph.node_count() as u32).collect();
            random_order(&ids, config.seed)?
        }
        Strategy::Knn => knn_sequence(neighbors, config.knn_k, GroupOrder::Seeded(config.seed))?,
        Strategy::Cluster => cluster_order(
            embeddings,
            config.n_clusters.min(embeddings.len()),
            config.seed,
        )?,
    };
    path.weigh(graph)?;
    Ok(path)
}

fn evaluate(
    strategy: Strategy,
    corpus: &Corpus,
    embeddings: &EmbeddingStore,
    neighbors: &NeighborList,
    graph: &DocumentGraph,
    config: &ReportConfig,
) -> Result<StrategyMetrics> {
    let path = order_for(strategy, embeddings, neighbors, graph, config)?;
    let (contexts, report) = pack_contexts(&path, corpus, &config.pack)?;
    coverage_check(&contexts, &report, corpus, &path, &config.pack).into_result()?;
    Ok(StrategyMetrics {
        intra_context_similarity: intra_context_similarity(&contexts, embeddings)?,
        repetition_rate: repetition_rate(&path.order),
        path_weight: path.weight.unwrap_or(0.0),
        context_count: report.contexts,
        dropped_tokens: report.dropped_tokens,
    })
}

/// Runs order → pack → metrics for each strategy. A failing strategy is
/// recorded as failed and the others still run.
pub fn strategy_report(
    corpus: &Corpus,
    embeddings: &EmbeddingStore,
    neighbors: &NeighborList,
    graph: &DocumentGraph,
    strategies: &[Strategy],
    config: &ReportConfig,
) -> Result<StrategyReport> {
    let n = corpus.len();
    if embeddings.len() != n || neighbors.len() != n || graph.node_count() != n {
        return Err(Error::invalid(format!(
            "artifact sizes disagree: corpus {n}, embeddings {}, neighbors {}, graph {}",
            embeddings.len(),
            neighbors.len(),
            graph.node_count()
        )));
    }
    let outcomes: Vec<(Strategy, StrategyOutcome)> = strategies
        .par_iter()
        .map(|&s| {
            let outcome = match evaluate(s, corpus, embeddings, neighbors, graph, config) {
                Ok(m) => StrategyOutcome::Ok(m),
                Err(e) => StrategyOutcome::Failed {
                    failed: e.to_string(),
                },
            };
            (s, outcome)
        })
        .collect();
    Ok(StrategyReport {
        strategies: outcomes
            .into_iter()
            .map(|(s, o)| (s.name().to_string(), o))
            .collect(),
    })
}
