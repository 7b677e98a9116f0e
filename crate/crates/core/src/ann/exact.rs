use rayon::prelude::*;

use super::{check_query_ids, NeighborList, TopK};
use crate::embed::{cosine_with_norms, EmbeddingStore};
use crate::error::{Error, Result};

/// Full scan scoring every stored row with exact cosine.
///
/// Row `j` of `embeddings` is document `j`. When `query_ids` is given, each
/// query's own id is left out of its results. Ties go to the lower id.
pub fn exact_search(
    embeddings: &EmbeddingStore,
    queries: &EmbeddingStore,
    query_ids: Option<&[u32]>,
    k: usize,
) -> Result<NeighborList> {
    let ids: Vec<u32> = (0..embeddings.len() as u32).collect();
    exact_scan(embeddings, &ids, queries, query_ids, k)
}

/// Exact scan over rows carrying arbitrary global ids.
pub(crate) fn exact_scan(
    embeddings: &EmbeddingStore,
    ids: &[u32],
    queries: &EmbeddingStore,
    query_ids: Option<&[u32]>,
    k: usize,
) -> Result<NeighborList> {
    if !embeddings.is_empty() && embeddings.dim() != queries.dim() {
        return Err(Error::DimensionMismatch {
            expected: embeddings.dim(),
            got: queries.dim(),
        });
    }
    check_query_ids(queries, query_ids)?;
    debug_assert_eq!(ids.len(), embeddings.len());
    let norms = embeddings.norms();
    if norms.contains(&0.0) {
        return Err(Error::ZeroNorm);
    }
    let rows = (0..queries.len())
        .into_par_iter()
        .map(|qi| {
            let q = queries.row(qi);
            let qn = crate::embed::norm(q);
            if qn == 0.0 {
                return Err(Error::ZeroNorm);
            }
            let mut top = TopK::new(k, query_ids.map(|ids| ids[qi]));
            for (j, v) in embeddings.rows().enumerate() {
                top.push(ids[j], cosine_with_norms(q, qn, v, norms[j]));
            }
            Ok(top.into_sorted())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NeighborList::from_sorted(k, rows, k > embeddings.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ids(list: &NeighborList, q: usize) -> Vec<u32> {
        list.row(q).iter().map(|n| n.id).collect()
    }

    #[test]
    fn stored_vector_is_its_own_best_match() {
        let data = EmbeddingStore::from_rows(&[[1.0, 0.0], [0.6, 0.8], [0.0, 1.0]]).unwrap();
        let q = EmbeddingStore::from_rows(&[[0.6, 0.8]]).unwrap();
        let res = exact_search(&data, &q, None, 2).unwrap();
        assert_eq!(res.row(0)[0].id, 1);
        assert_abs_diff_eq!(res.row(0)[0].score, 1.0, epsilon = 1e-6);
        let res = exact_search(&data, &q, Some(&[1]), 1).unwrap();
        assert_eq!(ids(&res, 0), vec![2]);
    }

    #[test]
    fn k1_over_three_vectors_is_argmax() {
        let data = EmbeddingStore::from_rows(&[[1.0, 0.0], [1.0, 1.0], [-1.0, 0.2]]).unwrap();
        let q = EmbeddingStore::from_rows(&[[1.0, 0.1]]).unwrap();
        // cos: 0.995, 0.774, -0.923
        assert_eq!(ids(&exact_search(&data, &q, None, 1).unwrap(), 0), vec![0]);
    }

    #[test]
    fn hand_enumerated_five_by_four() {
        let rows = [
            [1.0f32, 0.0, 0.0, 0.0],
            [1.0, 1.0, 0.0, 0.0],
            [0.0, 1.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 2.0],
            [1.0, 1.0, 1.0, 1.0],
        ];
        let data = EmbeddingStore::from_rows(&rows).unwrap();
        let ids_all: Vec<u32> = (0..5).collect();
        let res = exact_search(&data, &data, Some(&ids_all), 4).unwrap();
        // Hand-computed cosines for query 0: d1 = 1/sqrt2 = .7071, d2 = 0,
        // d3 = 0, d4 = 1/2. Ties at 0 resolve to the lower id.
        let r0: Vec<(u32, f32)> = res.row(0).iter().map(|n| (n.id, n.score)).collect();
        assert_eq!(r0.iter().map(|x| x.0).collect::<Vec<_>>(), vec![1, 4, 2, 3]);
        assert_abs_diff_eq!(r0[0].1, std::f32::consts::FRAC_1_SQRT_2, epsilon = 1e-6);
        assert_abs_diff_eq!(r0[1].1, 0.5, epsilon = 1e-6);
        // Query 2 = (0,1,1,0)/sqrt2: d1 = 1/2, d4 = 2/(2 sqrt2) = .7071, d0 = 0, d3 = 0.
        assert_eq!(ids(&res, 2), vec![4, 1, 0, 3]);
        // Query 3 = e4: only d4 overlaps with cos 1/2.
        assert_eq!(ids(&res, 3), vec![4, 0, 1, 2]);
        assert_abs_diff_eq!(res.row(3)[0].score, 0.5, epsilon = 1e-6);
    }

    #[test]
    fn oversized_k_returns_everything_flagged() {
        let data = EmbeddingStore::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let res = exact_search(&data, &data, Some(&[0, 1]), 5).unwrap();
        assert!(res.is_truncated());
        assert_eq!(res.row(0).len(), 1);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let data = EmbeddingStore::from_rows(&[[1.0, 0.0]]).unwrap();
        let q = EmbeddingStore::from_rows(&[[1.0, 0.0, 0.0]]).unwrap();
        assert!(exact_search(&data, &q, None, 1).is_err());
    }
}
