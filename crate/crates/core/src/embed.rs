//! Dense document embeddings, cosine similarity and the built-in hash embedder.
//!
//! Embedding file layout (little-endian):
//!
//! ```text
//! "ICPE" | version u32 = 1 | count u64 | dim u32 | flags u32 (bit 0 = normalized)
//! count * dim f32, row-major
//! ```

use std::path::Path;

use rayon::prelude::*;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::io::{BinReader, BinWriter};

pub const EMBEDDINGS_MAGIC: &[u8; 4] = b"ICPE";
const FLAG_NORMALIZED: u32 = 1;

/// Inner product with a fixed summation order so every caller sees the same
/// rounding for the same pair of rows.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0f32; 8];
    let chunks = a.len() / 8 * 8;
    for (ca, cb) in a[..chunks].chunks_exact(8).zip(b[..chunks].chunks_exact(8)) {
        for l in 0..8 {
            acc[l] += ca[l] * cb[l];
        }
    }
    let mut tail = 0f32;
    for i in chunks..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
pub fn norm(v: &[f32]) -> f32 {
    dot(v, v).sqrt()
}

#[inline]
pub(crate) fn squared_l2(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0f32; 8];
    let chunks = a.len() / 8 * 8;
    for (ca, cb) in a[..chunks].chunks_exact(8).zip(b[..chunks].chunks_exact(8)) {
        for l in 0..8 {
            let d = ca[l] - cb[l];
            acc[l] += d * d;
        }
    }
    let mut tail = 0f32;
    for i in chunks..a.len() {
        let d = a[i] - b[i];
        tail += d * d;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Cosine from precomputed norms. Symmetric in its arguments bit-for-bit.
#[inline]
pub(crate) fn cosine_with_norms(u: &[f32], un: f32, v: &[f32], vn: f32) -> f32 {
    (dot(u, v) / (un * vn)).clamp(-1.0, 1.0)
}

/// Cosine similarity between two vectors.
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f32> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            got: v.len(),
        });
    }
    let (un, vn) = (norm(u), norm(v));
    if un == 0.0 || vn == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(cosine_with_norms(u, un, v, vn))
}

/// Row-major `count x dim` matrix of document embeddings; row `i` belongs to
/// document `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    data: Vec<f32>,
    normalized: bool,
}

impl EmbeddingStore {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dim must be positive"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "data length {} is not a multiple of dim {dim}",
                data.len()
            )));
        }
        Ok(Self {
            dim,
            data,
            normalized: false,
        })
    }

    /// Builds a store and L2-normalizes every row.
    pub fn normalized(dim: usize, data: Vec<f32>) -> Result<Self> {
        let mut store = Self::new(dim, data)?;
        store.normalize()?;
        Ok(store)
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn norms(&self) -> Vec<f32> {
        self.rows().map(norm).collect()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let dim = self.dim;
        self.data.par_chunks_mut(dim).try_for_each(|row| {
            let n = norm(row);
            if n == 0.0 {
                return Err(Error::ZeroNorm);
            }
            row.iter_mut().for_each(|x| *x /= n);
            Ok(())
        })?;
        self.normalized = true;
        Ok(())
    }

    /// Copies the listed rows (in the given order) into a new store.
    pub fn select(&self, ids: &[u32]) -> EmbeddingStore {
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        for &id in ids {
            data.extend_from_slice(self.row(id as usize));
        }
        EmbeddingStore {
            dim: self.dim,
            data,
            normalized: self.normalized,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BinWriter::create(path)?;
        w.header(EMBEDDINGS_MAGIC)?;
        w.u64(self.len() as u64)?;
        w.u32(self.dim as u32)?;
        w.u32(if self.normalized { FLAG_NORMALIZED } else { 0 })?;
        w.f32s(&self.data)?;
        w.finish()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = BinReader::open(path, "ICPE")?;
        r.header(EMBEDDINGS_MAGIC)?;
        let count = r.u64()?;
        let dim = r.u32()? as u64;
        let flags = r.u32()?;
        if dim == 0 {
            return Err(Error::format("ICPE", "dim is zero"));
        }
        let total = count
            .checked_mul(dim)
            .ok_or_else(|| Error::format("ICPE", "count x dim overflows"))?;
        let total = r.count(total, "count x dim")?;
        let expected_bytes = total as u64 * 4;
        let actual_bytes = std::fs::metadata(path)?.len().saturating_sub(24);
        if actual_bytes < expected_bytes {
            return Err(Error::format("ICPE", "truncated file"));
        }
        let mut data = vec![0f32; total];
        r.f32_into(&mut data)?;
        r.finish()?;
        Ok(Self {
            dim: dim as usize,
            data,
            normalized: flags & FLAG_NORMALIZED != 0,
        })
    }
}

/// Reads or writes an embedding file. `Write` returns the store unchanged.
pub enum Direction<'a> {
    Read,
    Write(&'a EmbeddingStore),
}

pub fn persist_embeddings(path: &Path, direction: Direction<'_>) -> Result<EmbeddingStore> {
    match direction {
        Direction::Read => EmbeddingStore::read(path),
        Direction::Write(store) => {
            store.write(path)?;
            Ok(store.clone())
        }
    }
}

#[inline]
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

const BUCKET_SEED: u64 = 0x243f_6a88_85a3_08d3;
const SIGN_SEED: u64 = 0x1319_8a2e_0370_7344;
const BIGRAM_SEED: u64 = 0xa409_3822_299f_31d0;

/// Signed feature hashing over unigrams and adjacent 2-grams, L2-normalized.
///
/// 2-grams are only formed from adjacent *distinct* tokens, so a text made of
/// one repeated word points in the same direction as the word alone.
pub fn hash_embed(tokens: &[u32], dim: usize) -> Result<Vec<f32>> {
    if dim < 8 {
        return Err(Error::invalid(format!(
            "hash_embed dim must be >= 8, got {dim}"
        )));
    }
    if tokens.is_empty() {
        return Err(Error::invalid("hash_embed needs at least one token"));
    }
    let mut acc = vec![0f64; dim];
    let mut add = |key: u64| {
        let bucket = (splitmix64(key ^ BUCKET_SEED) % dim as u64) as usize;
        let sign = if splitmix64(key ^ SIGN_SEED) & 1 == 0 {
            1.0
        } else {
            -1.0
        };
        acc[bucket] += sign;
    };
    for &t in tokens {
        add(u64::from(t));
    }
    for pair in tokens.windows(2) {
        if pair[0] != pair[1] {
            add(splitmix64(u64::from(pair[0]) ^ BIGRAM_SEED) ^ u64::from(pair[1]).rotate_left(32));
        }
    }
    let n = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(acc.into_iter().map(|x| (x / n) as f32).collect())
}

/// Hash-embeds every document of a corpus in parallel.
pub fn embed_corpus(corpus: &Corpus, dim: usize) -> Result<EmbeddingStore> {
    let rows: Vec<Vec<f32>> = corpus
        .documents()
        .par_iter()
        .map(|d| hash_embed(&d.tokens, dim))
        .collect::<Result<_>>()?;
    let mut store = EmbeddingStore::from_rows(&rows)?;
    store.normalized = true;
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cosine_analytic_cases() {
        assert_abs_diff_eq!(cosine(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_abs_diff_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let s = std::f32::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(
            cosine(&[s, s], &[1.0, 0.0]).unwrap(),
            0.5f32.sqrt(),
            epsilon = 1e-6
        );
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(
            cosine(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::ZeroNorm)
        ));
        assert!(matches!(
            cosine(&[1.0], &[1.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn repeated_token_matches_single_token() {
        let a = hash_embed(&[7, 7, 7], 64).unwrap();
        let b = hash_embed(&[7], 64).unwrap();
        assert_abs_diff_eq!(cosine(&a, &b).unwrap(), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn hash_embed_is_unit_and_pure() {
        let tokens = [5, 9, 12, 5, 44, 1000];
        let a = hash_embed(&tokens, 128).unwrap();
        assert_abs_diff_eq!(norm(&a), 1.0, epsilon = 1e-6);
        assert_eq!(a, hash_embed(&tokens, 128).unwrap());
    }

    #[test]
    fn hash_embed_preconditions() {
        assert!(hash_embed(&[], 64).is_err());
        assert!(hash_embed(&[3], 7).is_err());
    }

    #[test]
    fn round_trip_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.icpe");
        let data: Vec<f32> = (0..100 * 64).map(|i| (i as f32 * 0.37).sin()).collect();
        let store = EmbeddingStore::new(64, data).unwrap();
        persist_embeddings(&path, Direction::Write(&store)).unwrap();
        let back = persist_embeddings(&path, Direction::Read).unwrap();
        assert_eq!(back, store);
        let bytes = std::fs::read(&path).unwrap();
        back.write(&path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), bytes);
    }

    #[test]
    fn corrupt_magic_names_expected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.icpe");
        EmbeddingStore::new(8, vec![1.0; 16])
            .unwrap()
            .write(&path)
            .unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, bytes).unwrap();
        let err = EmbeddingStore::read(&path).unwrap_err().to_string();
        assert!(err.contains("ICPE"), "{err}");
    }

    #[test]
    fn truncated_and_overflowing_headers_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.icpe");
        EmbeddingStore::new(8, vec![1.0; 16])
            .unwrap()
            .write(&path)
            .unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(EmbeddingStore::read(&path).is_err());

        let mut w = BinWriter::create(&path).unwrap();
        w.header(EMBEDDINGS_MAGIC).unwrap();
        w.u64(u64::MAX / 2).unwrap();
        w.u32(768).unwrap();
        w.u32(1).unwrap();
        w.finish().unwrap();
        let err = EmbeddingStore::read(&path).unwrap_err().to_string();
        assert!(err.contains("overflow"), "{err}");
    }

    #[test]
    fn accepts_768_dim_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.icpe");
        let data: Vec<f32> = (0..3 * 768).map(|i| 1.0 + (i % 7) as f32).collect();
        let store = EmbeddingStore::normalized(768, data).unwrap();
        store.write(&path).unwrap();
        let back = EmbeddingStore::read(&path).unwrap();
        assert_eq!(back.dim(), 768);
        assert!(back.is_normalized());
        for r in back.rows() {
            assert_abs_diff_eq!(norm(r), 1.0, epsilon = 1e-4);
        }
    }
}
