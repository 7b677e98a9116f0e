//! Near-duplicate removal from retrieval scores.
//!
//! Only pairs that appear in some neighbor list are compared, so the
//! guarantee covers observed kNN pairs rather than all `O(N^2)` pairs.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ann::{Neighbor, NeighborList};
use crate::corpus::Corpus;
use crate::embed::EmbeddingStore;
use crate::error::{Error, Result};
use crate::io::{BinReader, BinWriter};

pub const DEFAULT_THRESHOLD: f32 = 0.95;

/// Partition of corpus ids into survivors and removed near-duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct KeepSet {
    pub kept: Vec<u32>,
    pub removed: Vec<u32>,
    pub threshold: f32,
}

#[derive(Serialize, Deserialize)]
struct KeepSetHeader {
    threshold: f32,
    total: usize,
    kept: usize,
    removed: usize,
}

impl KeepSet {
    pub fn total(&self) -> usize {
        self.kept.len() + self.removed.len()
    }

    /// Text file: a JSON header line, then one removed id per line.
    pub fn write(&self, path: &Path) -> Result<()> {
        let header = KeepSetHeader {
            threshold: self.threshold,
            total: self.total(),
            kept: self.kept.len(),
            removed: self.removed.len(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for id in &self.removed {
            out.push_str(&id.to_string());
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut lines = BufReader::new(fs::File::open(path)?).lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::format("keep set", "missing header"))??;
        let header: KeepSetHeader = serde_json::from_str(&header_line)
            .map_err(|e| Error::format("keep set", e.to_string()))?;
        let mut removed = Vec::with_capacity(header.removed);
        for (i, line) in lines.enumerate() {
            let line = line?;
            removed.push(
                line.trim()
                    .parse::<u32>()
                    .map_err(|e| Error::MalformedLine {
                        line: i + 2,
                        message: e.to_string(),
                    })?,
            );
        }
        if removed.len() != header.removed || header.kept + header.removed != header.total {
            return Err(Error::format("keep set", "counts disagree with header"));
        }
        let mut is_removed = vec![false; header.total];
        for &id in &removed {
            *is_removed
                .get_mut(id as usize)
                .ok_or(Error::UnknownId(id))? = true;
        }
        let kept = (0..header.total as u32)
            .filter(|&i| !is_removed[i as usize])
            .collect();
        Ok(Self {
            kept,
            removed,
            threshold: header.threshold,
        })
    }
}

/// Marks documents as duplicates of lower-id survivors.
///
/// Ids are scanned in ascending order; `j` is removed iff an already-kept
/// `i` has an observed similarity `s(i, j) >= threshold` in either `i`'s or
/// `j`'s neighbor list.
pub fn find_duplicates(neighbors: &NeighborList, threshold: f32) -> Result<KeepSet> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::invalid(format!(
            "dedup threshold must be in (0, 1], got {threshold}"
        )));
    }
    let n = neighbors.len();
    // For every id, the lower ids it was observed to duplicate.
    let mut lower: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (q, row) in neighbors.rows().iter().enumerate() {
        for nb in row {
            if nb.id as usize >= n {
                return Err(Error::UnknownId(nb.id));
            }
            if nb.id as usize == q {
                return Err(Error::invalid(format!(
                    "neighbor list of {q} contains itself"
                )));
            }
            if nb.score >= threshold {
                let (a, b) = if (nb.id as usize) < q {
                    (nb.id, q as u32)
                } else {
                    (q as u32, nb.id)
                };
                lower[b as usize].push(a);
            }
        }
    }

    let mut kept_flag = vec![false; n];
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for j in 0..n {
        if lower[j].iter().any(|&i| kept_flag[i as usize]) {
            removed.push(j as u32);
        } else {
            kept_flag[j] = true;
            kept.push(j as u32);
        }
    }
    Ok(KeepSet {
        kept,
        removed,
        threshold,
    })
}

/// Corpus, embeddings and neighbor lists restricted to the survivors.
#[derive(Debug, Clone)]
pub struct Deduplicated {
    pub corpus: Corpus,
    pub embeddings: EmbeddingStore,
    pub neighbors: NeighborList,
    /// `(old id, new id)` for every survivor, ascending.
    pub remap: Vec<(u32, u32)>,
}

/// Deletes removed ids everywhere and renumbers survivors densely.
pub fn apply_keep_set(
    corpus: &Corpus,
    embeddings: &EmbeddingStore,
    neighbors: &NeighborList,
    keep: &KeepSet,
) -> Result<Deduplicated> {
    let n = corpus.len();
    if keep.total() != n || embeddings.len() != n || neighbors.len() != n {
        return Err(Error::invalid(format!(
            "keep set covers {} ids, corpus has {n}, embeddings {}, neighbor rows {}",
            keep.total(),
            embeddings.len(),
            neighbors.len()
        )));
    }
    let mut new_id: Vec<Option<u32>> = vec![None; n];
    for (new, &old) in keep.kept.iter().enumerate() {
        *new_id.get_mut(old as usize).ok_or(Error::UnknownId(old))? = Some(new as u32);
    }

    let rows: Vec<Vec<Neighbor>> = keep
        .kept
        .par_iter()
        .map(|&old| {
            neighbors
                .row(old as usize)
                .iter()
                .filter_map(|nb| {
                    new_id
                        .get(nb.id as usize)
                        .copied()
                        .flatten()
                        .map(|id| Neighbor::new(id, nb.score))
                })
                .collect()
        })
        .collect();

    let survivors = keep.kept.len() as u32;
    for row in &rows {
        if let Some(bad) = row.iter().find(|nb| nb.id >= survivors) {
            return Err(Error::UnknownId(bad.id));
        }
    }

    Ok(Deduplicated {
        corpus: corpus.retain_ids(&keep.kept),
        embeddings: embeddings.select(&keep.kept),
        neighbors: NeighborList::from_sorted(neighbors.k(), rows, neighbors.is_truncated()),
        remap: keep
            .kept
            .iter()
            .enumerate()
            .map(|(new, &old)| (old, new as u32))
            .collect(),
    })
}

pub fn write_remap(path: &Path, remap: &[(u32, u32)]) -> Result<()> {
    let mut w = BinWriter::create(path)?;
    for &(old, new) in remap {
        w.u32(old)?;
        w.u32(new)?;
    }
    w.finish()?;
    Ok(())
}

pub fn read_remap(path: &Path) -> Result<Vec<(u32, u32)>> {
    let len = fs::metadata(path)?.len();
    if len % 8 != 0 {
        return Err(Error::format("remap", "length is not a multiple of 8"));
    }
    let mut r = BinReader::open(path, "remap")?;
    (0..len / 8).map(|_| Ok((r.u32()?, r.u32()?))).collect()
}
