//! Document orderings: the greedy path traversal and the baselines it is
//! compared against.
//!
//! Path file layout (little-endian):
//!
//! ```text
//! "ICPP" | version u32 | element_count u64 | strategy tag u8 | ids u32 * element_count
//! jump_count u64 | jump positions u64 * jump_count
//! ```

mod tsp;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use tsp::{brute_force_max_path, tsp_path, StepRule, Traversal, TspOptions, BRUTE_FORCE_LIMIT};

use crate::ann::NeighborList;
use crate::embed::EmbeddingStore;
use crate::error::{Error, Result};
use crate::graph::DocumentGraph;
use crate::io::{BinReader, BinWriter};
use crate::kmeans::{kmeans, KMeansParams};

pub const PATH_MAGIC: &[u8; 4] = b"ICPP";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Icp,
    Knn,
    Cluster,
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Icp,
        Strategy::Knn,
        Strategy::Cluster,
        Strategy::Random,
    ];

    pub fn tag(self) -> u8 {
        match self {
            Strategy::Icp => 0,
            Strategy::Knn => 1,
            Strategy::Cluster => 2,
            Strategy::Random => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|s| s.tag() == tag)
            .ok_or_else(|| Error::format("ICPP", format!("unknown strategy tag {tag}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Icp => "icp",
            Strategy::Knn => "knn",
            Strategy::Cluster => "cluster",
            Strategy::Random => "random",
        }
    }

    /// Every document appears exactly once in orderings of this strategy.
    pub fn is_permutation(self) -> bool {
        self != Strategy::Knn
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy `{s}`")))
    }
}

/// A document ordering. `jumps` are positions in `order` where a walk
/// restarted through a weight-0 edge.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedPath {
    pub order: Vec<u32>,
    pub jumps: Vec<usize>,
    /// Sum of edge weights over consecutive pairs, when known.
    pub weight: Option<f64>,
    pub strategy: Strategy,
}

impl SortedPath {
    pub fn new(order: Vec<u32>, strategy: Strategy) -> Self {
        Self {
            order,
            jumps: Vec::new(),
            weight: None,
            strategy,
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Computes and records the path weight on `graph`.
    pub fn weigh(&mut self, graph: &DocumentGraph) -> Result<f64> {
        let w = path_weight(&self.order, graph)?;
        self.weight = Some(w);
        Ok(w)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BinWriter::create(path)?;
        w.header(PATH_MAGIC)?;
        w.u64(self.order.len() as u64)?;
        w.u8(self.strategy.tag())?;
        w.u32s(&self.order)?;
        w.u64(self.jumps.len() as u64)?;
        for &j in &self.jumps {
            w.u64(j as u64)?;
        }
        w.finish()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = BinReader::open(path, "ICPP")?;
        r.header(PATH_MAGIC)?;
        let n = r.u64()?;
        let n = r.count(n, "element count")?;
        let strategy = Strategy::from_tag(r.u8()?)?;
        if std::fs::metadata(path)?.len() < 17 + 4 * n as u64 {
            return Err(Error::format("ICPP", "truncated file"));
        }
        let mut order = vec![0u32; n];
        r.u32_into(&mut order)?;
        let jumps_len = r.u64()?;
        let jumps_len = r.count(jumps_len, "jump count")?;
        let jumps = (0..jumps_len)
            .map(|_| r.u64().map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        r.finish()?;
        Ok(Self {
            order,
            jumps,
            weight: None,
            strategy,
        })
    }
}

/// Sum of edge weights over consecutive pairs; absent edges contribute 0.
pub fn path_weight(order: &[u32], graph: &DocumentGraph) -> Result<f64> {
    if let Some(&bad) = order.iter().find(|&&id| !graph.contains(id)) {
        return Err(Error::UnknownId(bad));
    }
    Ok(order
        .windows(2)
        .map(|p| graph.weight(p[0], p[1]).map_or(0.0, f64::from))
        .sum())
}

/// The "Standard" baseline: a seeded uniform shuffle.
pub fn random_order(ids: &[u32], seed: u64) -> Result<SortedPath> {
    if ids.is_empty() {
        return Err(Error::invalid("cannot shuffle an empty id set"));
    }
    let mut order = ids.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(SortedPath::new(order, Strategy::Random))
}

/// Order in which kNN groups are emitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupOrder {
    Ids,
    Seeded(u64),
}

/// The kNN baseline: each document followed by its top-`k` neighbors.
///
/// Groups are concatenated, so documents that are frequent neighbors repeat.
pub fn knn_sequence(neighbors: &NeighborList, k: usize, order: GroupOrder) -> Result<SortedPath> {
    if k > neighbors.k() {
        return Err(Error::invalid(format!(
            "knn group size {k} exceeds stored neighbor count {}",
            neighbors.k()
        )));
    }
    let mut heads: Vec<u32> = (0..neighbors.len() as u32).collect();
    if let GroupOrder::Seeded(seed) = order {
        heads.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let mut stream = Vec::with_capacity(heads.len() * (k + 1));
    for head in heads {
        stream.push(head);
        stream.extend(neighbors.row(head as usize).iter().take(k).map(|nb| nb.id));
    }
    Ok(SortedPath::new(stream, Strategy::Knn))
}

/// The clustering baseline: k-means clusters in seeded-random order, members
/// of each cluster in seeded-random order.
pub fn cluster_order(
    embeddings: &EmbeddingStore,
    n_clusters: usize,
    seed: u64,
) -> Result<SortedPath> {
    let n = embeddings.len();
    if n_clusters == 0 || n_clusters > n {
        return Err(Error::invalid(format!(
            "n_clusters must be in 1..={n}, got {n_clusters}"
        )));
    }
    let km = kmeans(
        embeddings.as_slice(),
        embeddings.dim(),
        &KMeansParams::new(n_clusters, seed),
    )?;
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); n_clusters];
    for (doc, &c) in km.assignments.iter().enumerate() {
        members[c as usize].push(doc as u32);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_edc1_u64);
    members.shuffle(&mut rng);
    let mut order = Vec::with_capacity(n);
    for mut cluster in members {
        cluster.shuffle(&mut rng);
        order.extend(cluster);
    }
    Ok(SortedPath::new(order, Strategy::Cluster))
}
