//! The undirected weighted document graph built from kNN lists.
//!
//! Edge `(i, j)` exists iff `j ∈ N(i)` or `i ∈ N(j)`; its weight is the
//! cosine similarity of the two documents. Adjacency rows are sorted by
//! descending weight, then ascending id.
//!
//! Graph file layout (little-endian):
//!
//! ```text
//! "ICPG" | version u32 | node_count u64 | offsets u64 * (node_count + 1)
//! then (neighbor u32, weight f32) pairs
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ann::{Neighbor, NeighborList};
use crate::error::{Error, Result};
use crate::io::{BinReader, BinWriter};

pub const GRAPH_MAGIC: &[u8; 4] = b"ICPG";
/// Largest allowed disagreement between the two directed scores of an edge.
pub const SCORE_TOLERANCE: f32 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct DocumentGraph {
    offsets: Vec<usize>,
    adjacency: Vec<Neighbor>,
}

impl DocumentGraph {
    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.len() / 2
    }

    pub fn neighbors(&self, node: u32) -> &[Neighbor] {
        let i = node as usize;
        &self.adjacency[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn degree(&self, node: u32) -> usize {
        let i = node as usize;
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn contains(&self, node: u32) -> bool {
        (node as usize) < self.node_count()
    }

    pub fn weight(&self, a: u32, b: u32) -> Option<f32> {
        let (small, other) = if self.degree(a) <= self.degree(b) {
            (a, b)
        } else {
            (b, a)
        };
        self.neighbors(small)
            .iter()
            .find(|n| n.id == other)
            .map(|n| n.score)
    }

    /// Builds a graph directly from undirected `(a, b, weight)` edges.
    pub fn from_edges(node_count: usize, edges: &[(u32, u32, f32)]) -> Result<Self> {
        let rows: Vec<Vec<Neighbor>> = {
            let mut rows = vec![Vec::new(); node_count];
            for &(a, b, w) in edges {
                if a as usize >= node_count {
                    return Err(Error::UnknownId(a));
                }
                if b as usize >= node_count {
                    return Err(Error::UnknownId(b));
                }
                rows[a as usize].push(Neighbor::new(b, w));
                rows[b as usize].push(Neighbor::new(a, w));
            }
            rows
        };
        build_graph(&NeighborList::new(0, rows))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BinWriter::create(path)?;
        w.header(GRAPH_MAGIC)?;
        w.u64(self.node_count() as u64)?;
        for &o in &self.offsets {
            w.u64(o as u64)?;
        }
        for nb in &self.adjacency {
            w.u32(nb.id)?;
            w.f32(nb.score)?;
        }
        w.finish()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = BinReader::open(path, "ICPG")?;
        r.header(GRAPH_MAGIC)?;
        let n = r.u64()?;
        let n = r.count(n, "node count")?;
        if std::fs::metadata(path)?.len() < 16 + 8 * (n as u64 + 1) {
            return Err(Error::format("ICPG", "truncated file"));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        for _ in 0..=n {
            offsets.push(r.u64()? as usize);
        }
        if offsets[0] != 0 || offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::format("ICPG", "offsets are not monotone"));
        }
        let total = offsets[n];
        let mut adjacency = Vec::with_capacity(total);
        for _ in 0..total {
            let id = r.u32()?;
            let score = r.f32()?;
            if id as usize >= n {
                return Err(Error::format(
                    "ICPG",
                    format!("neighbor id {id} out of range"),
                ));
            }
            adjacency.push(Neighbor { id, score });
        }
        r.finish()?;
        Ok(Self { offsets, adjacency })
    }
}

/// Symmetrizes kNN lists into the undirected document graph.
///
/// Both directed scores of an edge must agree within [`SCORE_TOLERANCE`].
pub fn build_graph(neighbors: &NeighborList) -> Result<DocumentGraph> {
    let n = neighbors.len();
    let mut directed: Vec<(u32, u32, f32)> = Vec::new();
    for (q, row) in neighbors.rows().iter().enumerate() {
        let q = q as u32;
        for nb in row {
            if nb.id as usize >= n {
                return Err(Error::UnknownId(nb.id));
            }
            if nb.id == q {
                return Err(Error::invalid(format!("self-loop on node {q}")));
            }
            directed.push((q.min(nb.id), q.max(nb.id), nb.score));
        }
    }
    directed.sort_by_key(|x| (x.0, x.1));

    let mut rows: Vec<Vec<Neighbor>> = vec![Vec::new(); n];
    let mut i = 0;
    while i < directed.len() {
        let (a, b, w) = directed[i];
        let mut j = i + 1;
        while j < directed.len() && (directed[j].0, directed[j].1) == (a, b) {
            let other = directed[j].2;
            if (other - w).abs() > SCORE_TOLERANCE || other.is_nan() != w.is_nan() {
                return Err(Error::ScoreMismatch {
                    a,
                    b,
                    forward: w,
                    backward: other,
                });
            }
            j += 1;
        }
        rows[a as usize].push(Neighbor::new(b, w));
        rows[b as usize].push(Neighbor::new(a, w));
        i = j;
    }

    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    let mut adjacency = Vec::with_capacity(rows.iter().map(Vec::len).sum());
    for mut row in rows {
        row.sort_by(Neighbor::rank_cmp);
        adjacency.extend(row);
        offsets.push(adjacency.len());
    }
    Ok(DocumentGraph { offsets, adjacency })
}

/// How ties between equally eligible documents are resolved.
#[derive(Debug, Clone)]
pub enum TieBreak {
    LowestId,
    Seeded(Box<ChaCha8Rng>),
}

impl TieBreak {
    pub fn seeded(seed: u64) -> Self {
        TieBreak::Seeded(Box::new(ChaCha8Rng::seed_from_u64(seed)))
    }

    /// Picks from candidates given in ascending id order.
    pub(crate) fn pick<I>(&mut self, mut candidates: I, len: usize) -> Option<u32>
    where
        I: Iterator<Item = u32>,
    {
        match self {
            TieBreak::LowestId => candidates.next(),
            TieBreak::Seeded(rng) if len > 0 => candidates.nth(rng.random_range(0..len)),
            TieBreak::Seeded(_) => None,
        }
    }
}

/// Whether degrees count all edges or only edges to unvisited documents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DegreeMode {
    #[default]
    Dynamic,
    Static,
}

/// Returns an unvisited document of minimum degree.
///
/// Under [`DegreeMode::Dynamic`] a node's degree counts only edges into
/// other unvisited nodes.
pub fn min_degree_select(
    graph: &DocumentGraph,
    unvisited: &BTreeSet<u32>,
    mode: DegreeMode,
    tie: &mut TieBreak,
) -> Result<u32> {
    if unvisited.is_empty() {
        return Err(Error::invalid("min_degree_select over an empty set"));
    }
    let degree = |u: u32| -> usize {
        match mode {
            DegreeMode::Static => graph.degree(u),
            DegreeMode::Dynamic => graph
                .neighbors(u)
                .iter()
                .filter(|nb| unvisited.contains(&nb.id))
                .count(),
        }
    };
    let mut best = usize::MAX;
    let mut ties: Vec<u32> = Vec::new();
    for &u in unvisited {
        if !graph.contains(u) {
            return Err(Error::UnknownId(u));
        }
        let d = degree(u);
        if d < best {
            best = d;
            ties.clear();
        }
        if d == best {
            ties.push(u);
        }
    }
    let len = ties.len();
    Ok(tie.pick(ties.into_iter(), len).expect("ties is non-empty"))
}
