use std::collections::HashSet;

use rayon::prelude::*;

use super::exact::exact_scan;
use super::{IvfPqIndex, Neighbor, NeighborList};
use crate::embed::EmbeddingStore;
use crate::error::{Error, Result};

/// A batch of embeddings carrying global document ids.
#[derive(Debug, Clone)]
pub struct Shard {
    pub ids: Vec<u32>,
    pub vectors: EmbeddingStore,
}

impl Shard {
    pub fn new(ids: Vec<u32>, vectors: EmbeddingStore) -> Result<Self> {
        if ids.len() != vectors.len() {
            return Err(Error::invalid(format!(
                "shard has {} ids for {} vectors",
                ids.len(),
                vectors.len()
            )));
        }
        Ok(Self { ids, vectors })
    }

    /// Splits a corpus-wide store into consecutive shards of at most `size` rows.
    pub fn split(embeddings: &EmbeddingStore, size: usize) -> Vec<Shard> {
        let size = size.max(1);
        (0..embeddings.len())
            .step_by(size)
            .map(|start| {
                let ids: Vec<u32> = (start..(start + size).min(embeddings.len()))
                    .map(|i| i as u32)
                    .collect();
                let vectors = embeddings.select(&ids);
                Shard { ids, vectors }
            })
            .collect()
    }
}

/// How each shard is searched.
#[derive(Debug, Clone, Copy)]
pub enum ShardBackend<'a> {
    /// Brute-force cosine over the shard.
    Exact,
    /// Clone the trained (empty) index, add the shard, probe `nprobe` lists.
    Index {
        trained: &'a IvfPqIndex,
        nprobe: usize,
    },
}

/// Searches every shard independently and merges per-query results by
/// descending score into a global top-k.
pub fn sharded_search(
    shards: &[Shard],
    queries: &EmbeddingStore,
    query_ids: Option<&[u32]>,
    k: usize,
    backend: ShardBackend<'_>,
) -> Result<NeighborList> {
    let mut seen = HashSet::new();
    for shard in shards {
        for &id in &shard.ids {
            if !seen.insert(id) {
                return Err(Error::OverlappingShards(id));
            }
        }
    }

    let partial: Vec<NeighborList> = shards
        .par_iter()
        .map(|shard| match backend {
            ShardBackend::Exact => exact_scan(&shard.vectors, &shard.ids, queries, query_ids, k),
            ShardBackend::Index { trained, nprobe } => {
                let mut index = trained.empty_clone();
                index.add(&shard.vectors, &shard.ids)?;
                index.search(queries, query_ids, k, nprobe).map(|r| r.0)
            }
        })
        .collect::<Result<_>>()?;

    let rows = (0..queries.len())
        .into_par_iter()
        .map(|q| {
            let mut merged: Vec<Neighbor> = partial
                .iter()
                .flat_map(|p| p.row(q).iter().copied())
                .collect();
            merged.sort_by(Neighbor::rank_cmp);
            merged.truncate(k);
            merged
        })
        .collect();
    Ok(NeighborList::from_sorted(k, rows, k > seen.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ann::exact_search;

    fn shard(ids: &[u32], rows: &[[f32; 2]]) -> Shard {
        Shard::new(ids.to_vec(), EmbeddingStore::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn two_shards_merge_to_global_top2() {
        let a = shard(&[0, 1, 2], &[[1.0, 0.0], [0.8, 0.6], [0.0, 1.0]]);
        let b = shard(&[3, 4, 5], &[[0.6, 0.8], [-1.0, 0.0], [0.96, 0.28]]);
        let q = EmbeddingStore::from_rows(&[[1.0, 0.0]]).unwrap();
        let merged = sharded_search(&[a, b], &q, None, 2, ShardBackend::Exact).unwrap();
        // Brute force: cos with (1,0) is the x component: 1.0, .8, 0, .6, -1, .96.
        let got: Vec<u32> = merged.row(0).iter().map(|n| n.id).collect();
        assert_eq!(got, vec![0, 5]);
    }

    #[test]
    fn single_shard_equals_unsharded() {
        let rows = [[1.0, 0.0], [0.8, 0.6], [0.0, 1.0], [0.6, 0.8]];
        let data = EmbeddingStore::from_rows(&rows).unwrap();
        let ids: Vec<u32> = (0..4).collect();
        let one = sharded_search(
            &Shard::split(&data, 10),
            &data,
            Some(&ids),
            2,
            ShardBackend::Exact,
        )
        .unwrap();
        assert_eq!(one, exact_search(&data, &data, Some(&ids), 2).unwrap());
    }

    #[test]
    fn overlapping_ids_rejected() {
        let a = shard(&[0, 1], &[[1.0, 0.0], [0.0, 1.0]]);
        let b = shard(&[1, 2], &[[1.0, 0.0], [0.0, 1.0]]);
        let q = EmbeddingStore::from_rows(&[[1.0, 0.0]]).unwrap();
        assert!(matches!(
            sharded_search(&[a, b], &q, None, 1, ShardBackend::Exact),
            Err(Error::OverlappingShards(1))
        ));
    }
}
