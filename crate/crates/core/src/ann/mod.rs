//! Top-k retrieval: exact brute force, an inverted-file product-quantization
//! index, and sharded search with a merge step.

mod exact;
mod ivfpq;
mod shard;

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::path::Path;

pub use exact::exact_search;
pub use ivfpq::{Encoding, IndexParams, IvfPqIndex, SearchStats, CODEBOOK_SIZE, INDEX_MAGIC};
pub use shard::{sharded_search, Shard, ShardBackend};

use crate::embed::EmbeddingStore;
use crate::error::{Error, Result};
use crate::io::{BinReader, BinWriter};

pub const NEIGHBORS_MAGIC: &[u8; 4] = b"ICPN";
/// Neighbor-file id marking an unused slot in a short row.
pub const EMPTY_SLOT: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: u32,
    pub score: f32,
}

impl Neighbor {
    pub fn new(id: u32, score: f32) -> Self {
        Self { id, score }
    }

    /// Descending score, then ascending id.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then(self.id.cmp(&other.id))
    }
}

/// Heap entry ordered so the *worst* ranked neighbor sits on top.
struct Worst(Neighbor);

impl PartialEq for Worst {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Worst {}
impl PartialOrd for Worst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Worst {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.rank_cmp(&other.0)
    }
}

/// Bounded selection of the best `k` candidates, skipping one excluded id.
pub(crate) struct TopK {
    k: usize,
    exclude: Option<u32>,
    heap: BinaryHeap<Worst>,
}

impl TopK {
    pub(crate) fn new(k: usize, exclude: Option<u32>) -> Self {
        Self {
            k,
            exclude,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    #[inline]
    pub(crate) fn push(&mut self, id: u32, score: f32) {
        if Some(id) == self.exclude || self.k == 0 {
            return;
        }
        let cand = Neighbor { id, score };
        if self.heap.len() < self.k {
            self.heap.push(Worst(cand));
        } else if let Some(top) = self.heap.peek() {
            if cand.rank_cmp(&top.0) == Ordering::Less {
                self.heap.pop();
                self.heap.push(Worst(cand));
            }
        }
    }

    pub(crate) fn into_sorted(self) -> Vec<Neighbor> {
        self.heap
            .into_sorted_vec()
            .into_iter()
            .map(|w| w.0)
            .collect()
    }
}

/// Per-query top-k neighbors. Row `i` answers query `i`; for corpus-wide
/// retrieval query `i` is document `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList {
    k: usize,
    rows: Vec<Vec<Neighbor>>,
    truncated: bool,
}

impl NeighborList {
    /// Builds a list, sorting every row by rank.
    pub fn new(k: usize, mut rows: Vec<Vec<Neighbor>>) -> Self {
        for row in &mut rows {
            row.sort_by(Neighbor::rank_cmp);
        }
        Self {
            k,
            rows,
            truncated: false,
        }
    }

    pub(crate) fn from_sorted(k: usize, rows: Vec<Vec<Neighbor>>, truncated: bool) -> Self {
        Self { k, rows, truncated }
    }

    /// Convenience for fixtures: rows of `(id, score)` pairs.
    pub fn from_pairs(k: usize, rows: &[&[(u32, f32)]]) -> Self {
        Self::new(
            k,
            rows.iter()
                .map(|r| r.iter().map(|&(id, s)| Neighbor::new(id, s)).collect())
                .collect(),
        )
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[Neighbor] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<Neighbor>] {
        &self.rows
    }

    /// Set when `k` exceeded the number of stored vectors.
    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    /// Replaces every score with the exact cosine between the two documents.
    ///
    /// Quantized scores are asymmetric; graph construction needs `s(i,j) =
    /// s(j,i)`.
    pub fn rescore_exact(&mut self, embeddings: &EmbeddingStore) -> Result<()> {
        use rayon::prelude::*;
        let norms = embeddings.norms();
        let n = embeddings.len();
        if self.rows.len() > n {
            return Err(Error::invalid("more neighbor rows than embeddings"));
        }
        self.rows
            .par_iter_mut()
            .enumerate()
            .try_for_each(|(q, row)| {
                for nb in row.iter_mut() {
                    let j = nb.id as usize;
                    if j >= n {
                        return Err(Error::UnknownId(nb.id));
                    }
                    nb.score = crate::embed::cosine_with_norms(
                        embeddings.row(q),
                        norms[q],
                        embeddings.row(j),
                        norms[j],
                    );
                }
                row.sort_by(Neighbor::rank_cmp);
                Ok(())
            })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BinWriter::create(path)?;
        w.header(NEIGHBORS_MAGIC)?;
        w.u64(self.rows.len() as u64)?;
        w.u32(self.k as u32)?;
        for row in &self.rows {
            if row.len() > self.k {
                return Err(Error::invalid("neighbor row longer than k"));
            }
            for nb in row {
                w.u32(nb.id)?;
                w.f32(nb.score)?;
            }
            for _ in row.len()..self.k {
                w.u32(EMPTY_SLOT)?;
                w.f32(0.0)?;
            }
        }
        w.finish()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = BinReader::open(path, "ICPN")?;
        r.header(NEIGHBORS_MAGIC)?;
        let count = r.u64()?;
        let count = r.count(count, "doc count")?;
        let k = r.u32()? as usize;
        let expected = (count as u64)
            .checked_mul(k as u64 * 8)
            .ok_or_else(|| Error::format("ICPN", "doc_count x k overflows"))?;
        if std::fs::metadata(path)?.len().saturating_sub(20) < expected {
            return Err(Error::format("ICPN", "truncated file"));
        }
        let mut rows = Vec::with_capacity(count);
        for _ in 0..count {
            let mut row = Vec::with_capacity(k);
            for _ in 0..k {
                let id = r.u32()?;
                let score = r.f32()?;
                if id != EMPTY_SLOT {
                    row.push(Neighbor { id, score });
                }
            }
            rows.push(row);
        }
        r.finish()?;
        Ok(Self::from_sorted(k, rows, false))
    }
}

/// Mean over queries of `|approx top-k ∩ exact top-k| / k`.
pub fn recall(approx: &NeighborList, exact: &NeighborList, k: usize) -> Result<f64> {
    if approx.len() != exact.len() {
        return Err(Error::invalid(format!(
            "recall over mismatched query sets: {} vs {} rows",
            approx.len(),
            exact.len()
        )));
    }
    if k == 0 {
        return Err(Error::invalid("recall needs k >= 1"));
    }
    if approx.is_empty() {
        return Ok(1.0);
    }
    let total: f64 = approx
        .rows
        .iter()
        .zip(&exact.rows)
        .map(|(a, e)| {
            let truth: HashSet<u32> = e.iter().take(k).map(|n| n.id).collect();
            let hits = a.iter().take(k).filter(|n| truth.contains(&n.id)).count();
            hits as f64 / k as f64
        })
        .sum();
    Ok(total / approx.len() as f64)
}

/// Validates query ids against the query matrix.
pub(crate) fn check_query_ids(queries: &EmbeddingStore, ids: Option<&[u32]>) -> Result<()> {
    match ids {
        Some(ids) if ids.len() != queries.len() => Err(Error::invalid(format!(
            "{} query ids for {} queries",
            ids.len(),
            queries.len()
        ))),
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(row: &[Neighbor]) -> Vec<u32> {
        row.iter().map(|n| n.id).collect()
    }

    #[test]
    fn topk_orders_and_breaks_ties_by_id() {
        let mut top = TopK::new(3, Some(4));
        for (id, s) in [(5, 0.5), (4, 0.99), (2, 0.5), (9, 0.7), (1, 0.1), (0, 0.5)] {
            top.push(id, s);
        }
        assert_eq!(ids(&top.into_sorted()), vec![9, 0, 2]);
    }

    #[test]
    fn recall_definition() {
        let approx = NeighborList::from_pairs(3, &[&[(1, 0.9), (2, 0.8), (3, 0.7)]]);
        let exact = NeighborList::from_pairs(3, &[&[(1, 0.9), (2, 0.8), (4, 0.75)]]);
        assert!((recall(&approx, &exact, 3).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(recall(&exact, &exact, 3).unwrap(), 1.0);
        let disjoint = NeighborList::from_pairs(3, &[&[(7, 0.9), (8, 0.8), (9, 0.7)]]);
        assert_eq!(recall(&disjoint, &exact, 3).unwrap(), 0.0);
    }

    #[test]
    fn recall_rejects_mismatched_queries() {
        let a = NeighborList::from_pairs(1, &[&[(1, 0.9)]]);
        let b = NeighborList::from_pairs(1, &[&[(1, 0.9)], &[(0, 0.9)]]);
        assert!(recall(&a, &b, 1).is_err());
    }

    #[test]
    fn neighbor_file_round_trip_with_short_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("n.icpn");
        let list = NeighborList::from_pairs(2, &[&[(1, 0.9), (2, 0.5)], &[(0, 0.9)], &[]]);
        list.write(&path).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 20 + 3 * 2 * 8);
        assert_eq!(NeighborList::read(&path).unwrap(), list);
    }
}
