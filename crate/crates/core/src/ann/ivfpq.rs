//! Inverted-file index with product-quantized codes.
//!
//! Vectors are assigned to their nearest coarse centroid (L2) and stored in
//! that centroid's inverted list. In [`Encoding::Pq`] mode each vector is
//! encoded as `m` one-byte codes over independent subspaces; the raw vector
//! is quantized, not the residual from its coarse centroid. In
//! [`Encoding::Flat`] mode raw vectors are kept and scored with exact cosine,
//! which makes a full probe equivalent to [`super::exact_search`].
//!
//! Index file layout (little-endian):
//!
//! ```text
//! "ICPI" | version u32 | dim u32 | nlist u32 | m u32 | encoding u8 | trained u8
//! coarse centroids   nlist * dim f32            (if trained)
//! codebooks          m * 256 * (dim / m) f32    (if trained and Pq)
//! per list: len u64 | ids u32 * len | codes u8 * len * m  (Pq)
//!                                   | vectors f32 * len * dim (Flat)
//! ```

use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;

use super::{check_query_ids, NeighborList, TopK};
use crate::embed::{cosine_with_norms, dot, norm, squared_l2, EmbeddingStore};
use crate::error::{Error, Result};
use crate::io::{BinReader, BinWriter};
use crate::kmeans::{kmeans, nearest_centroid, KMeansParams};

pub const INDEX_MAGIC: &[u8; 4] = b"ICPI";
/// Centroids per subquantizer; one byte per code component.
pub const CODEBOOK_SIZE: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Pq,
    Flat,
}

impl Encoding {
    fn tag(self) -> u8 {
        match self {
            Encoding::Pq => 0,
            Encoding::Flat => 1,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Encoding::Pq),
            1 => Ok(Encoding::Flat),
            t => Err(Error::format("ICPI", format!("unknown encoding tag {t}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexParams {
    pub nlist: usize,
    pub m: usize,
    pub encoding: Encoding,
    pub seed: u64,
}

impl IndexParams {
    pub fn pq(nlist: usize, m: usize, seed: u64) -> Self {
        Self {
            nlist,
            m,
            encoding: Encoding::Pq,
            seed,
        }
    }

    pub fn flat(nlist: usize, seed: u64) -> Self {
        Self {
            nlist,
            m: 1,
            encoding: Encoding::Flat,
            seed,
        }
    }

    /// Smallest training sample `train` accepts.
    pub fn min_train_rows(&self) -> usize {
        match self.encoding {
            Encoding::Pq => self.nlist.max(CODEBOOK_SIZE),
            Encoding::Flat => self.nlist,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchStats {
    pub nlist: usize,
    pub nprobe: usize,
    pub candidates_scanned: u64,
}

impl SearchStats {
    pub fn probed_fraction(&self) -> f64 {
        self.nprobe as f64 / self.nlist as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct InvertedList {
    ids: Vec<u32>,
    /// `m` bytes per entry (Pq).
    codes: Vec<u8>,
    /// `dim` floats per entry (Flat).
    vectors: Vec<f32>,
    norms: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IvfPqIndex {
    dim: usize,
    nlist: usize,
    m: usize,
    encoding: Encoding,
    trained: bool,
    coarse: Vec<f32>,
    codebooks: Vec<f32>,
    lists: Vec<InvertedList>,
    ids: HashSet<u32>,
}

impl IvfPqIndex {
    /// An empty, untrained index.
    pub fn new(dim: usize, params: &IndexParams) -> Result<Self> {
        if dim == 0 || params.nlist == 0 || params.m == 0 {
            return Err(Error::invalid("dim, nlist and m must be positive"));
        }
        if params.encoding == Encoding::Pq && !dim.is_multiple_of(params.m) {
            return Err(Error::invalid(format!(
                "dim {dim} is not divisible by m {}",
                params.m
            )));
        }
        Ok(Self {
            dim,
            nlist: params.nlist,
            m: params.m,
            encoding: params.encoding,
            trained: false,
            coarse: Vec::new(),
            codebooks: Vec::new(),
            lists: vec![InvertedList::default(); params.nlist],
            ids: HashSet::new(),
        })
    }

    /// Trains coarse centroids and, for Pq, per-subspace codebooks.
    pub fn train(sample: &EmbeddingStore, params: &IndexParams) -> Result<Self> {
        let mut index = Self::new(sample.dim(), params)?;
        let need = params.min_train_rows();
        if sample.len() < need {
            return Err(Error::SampleTooSmall {
                got: sample.len(),
                need,
            });
        }
        let coarse = kmeans(
            sample.as_slice(),
            index.dim,
            &KMeansParams::new(params.nlist, params.seed),
        )?;
        index.coarse = coarse.centroids;

        if index.encoding == Encoding::Pq {
            let dsub = index.dsub();
            let books: Vec<Vec<f32>> = (0..index.m)
                .into_par_iter()
                .map(|j| {
                    let slice: Vec<f32> = sample
                        .rows()
                        .flat_map(|r| r[j * dsub..(j + 1) * dsub].iter().copied())
                        .collect();
                    let seed = params.seed.wrapping_add(1 + j as u64);
                    kmeans(&slice, dsub, &KMeansParams::new(CODEBOOK_SIZE, seed))
                        .map(|km| km.centroids)
                })
                .collect::<Result<_>>()?;
            index.codebooks = books.concat();
        }
        index.trained = true;
        Ok(index)
    }

    /// Assembles a trained index from externally supplied centroids.
    pub fn from_parts(
        dim: usize,
        params: &IndexParams,
        coarse: Vec<f32>,
        codebooks: Vec<f32>,
    ) -> Result<Self> {
        let mut index = Self::new(dim, params)?;
        if coarse.len() != params.nlist * dim {
            return Err(Error::invalid("coarse centroid matrix has the wrong shape"));
        }
        let book_len = match params.encoding {
            Encoding::Pq => params.m * CODEBOOK_SIZE * index.dsub(),
            Encoding::Flat => 0,
        };
        if codebooks.len() != book_len {
            return Err(Error::invalid("codebook matrix has the wrong shape"));
        }
        index.coarse = coarse;
        index.codebooks = codebooks;
        index.trained = true;
        Ok(index)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nlist(&self) -> usize {
        self.nlist
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn encoding(&self) -> Encoding {
        self.encoding
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn list_len(&self, list: usize) -> usize {
        self.lists[list].ids.len()
    }

    pub fn list_ids(&self, list: usize) -> &[u32] {
        &self.lists[list].ids
    }

    pub fn coarse_centroid(&self, list: usize) -> &[f32] {
        &self.coarse[list * self.dim..(list + 1) * self.dim]
    }

    fn dsub(&self) -> usize {
        self.dim / self.m
    }

    fn codeword(&self, sub: usize, code: usize) -> &[f32] {
        let dsub = self.dsub();
        let start = (sub * CODEBOOK_SIZE + code) * dsub;
        &self.codebooks[start..start + dsub]
    }

    /// A copy with the same training and no stored vectors.
    pub fn empty_clone(&self) -> Self {
        Self {
            lists: vec![InvertedList::default(); self.nlist],
            ids: HashSet::new(),
            ..self.clone()
        }
    }

    pub fn encode(&self, v: &[f32]) -> Vec<u8> {
        let dsub = self.dsub();
        (0..self.m)
            .map(|j| {
                let book =
                    &self.codebooks[j * CODEBOOK_SIZE * dsub..(j + 1) * CODEBOOK_SIZE * dsub];
                nearest_centroid(book, dsub, &v[j * dsub..(j + 1) * dsub]).0 as u8
            })
            .collect()
    }

    pub fn decode(&self, code: &[u8]) -> Vec<f32> {
        code.iter()
            .enumerate()
            .flat_map(|(j, &c)| self.codeword(j, c as usize).iter().copied())
            .collect()
    }

    /// Mean squared reconstruction error of the PQ codebooks over `data`.
    pub fn quantization_distortion(&self, data: &EmbeddingStore) -> Result<f64> {
        if !self.trained {
            return Err(Error::Untrained);
        }
        if self.encoding != Encoding::Pq {
            return Ok(0.0);
        }
        let total: f64 = data
            .rows()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|v| f64::from(squared_l2(v, &self.decode(&self.encode(v)))))
            .sum();
        Ok(total / data.len().max(1) as f64)
    }

    /// Assigns each vector to its nearest coarse list and stores its code.
    pub fn add(&mut self, embeddings: &EmbeddingStore, ids: &[u32]) -> Result<()> {
        if !self.trained {
            return Err(Error::Untrained);
        }
        if embeddings.is_empty() {
            return Ok(());
        }
        if embeddings.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: embeddings.dim(),
            });
        }
        if ids.len() != embeddings.len() {
            return Err(Error::invalid(format!(
                "{} ids for {} vectors",
                ids.len(),
                embeddings.len()
            )));
        }
        let mut batch = HashSet::with_capacity(ids.len());
        for &id in ids {
            if self.ids.contains(&id) || !batch.insert(id) {
                return Err(Error::DuplicateId(id));
            }
        }

        let rows: Vec<&[f32]> = embeddings.rows().collect();
        let encoded: Vec<(usize, Vec<u8>)> = rows
            .par_iter()
            .map(|v| {
                let list = nearest_centroid(&self.coarse, self.dim, v).0;
                let code = match self.encoding {
                    Encoding::Pq => self.encode(v),
                    Encoding::Flat => Vec::new(),
                };
                (list, code)
            })
            .collect();

        for ((&id, v), (list, code)) in ids.iter().zip(&rows).zip(encoded) {
            let l = &mut self.lists[list];
            l.ids.push(id);
            match self.encoding {
                Encoding::Pq => l.codes.extend_from_slice(&code),
                Encoding::Flat => {
                    l.vectors.extend_from_slice(v);
                    l.norms.push(norm(v));
                }
            }
        }
        self.ids.extend(batch);
        Ok(())
    }

    fn probe_order(&self, q: &[f32], nprobe: usize) -> Vec<usize> {
        let mut dists: Vec<(f32, usize)> = self
            .coarse
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(c, centroid)| (squared_l2(q, centroid), c))
            .collect();
        if nprobe < dists.len() {
            dists.select_nth_unstable_by(nprobe, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            dists.truncate(nprobe);
        }
        dists.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        dists.into_iter().map(|(_, c)| c).collect()
    }

    /// Scans the `nprobe` nearest lists for each query.
    ///
    /// Pq scores are the inner product between the query and each stored
    /// code's reconstruction (asymmetric distance); Flat scores are exact
    /// cosine. A query's own id, when given, is excluded from its results.
    pub fn search(
        &self,
        queries: &EmbeddingStore,
        query_ids: Option<&[u32]>,
        k: usize,
        nprobe: usize,
    ) -> Result<(NeighborList, SearchStats)> {
        if !self.trained {
            return Err(Error::Untrained);
        }
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if nprobe == 0 || nprobe > self.nlist {
            return Err(Error::invalid(format!(
                "nprobe must be in 1..={}, got {nprobe}",
                self.nlist
            )));
        }
        if queries.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: queries.dim(),
            });
        }
        check_query_ids(queries, query_ids)?;

        let dsub = self.dsub();
        let results: Vec<(Vec<super::Neighbor>, u64)> = (0..queries.len())
            .into_par_iter()
            .map(|qi| {
                let q = queries.row(qi);
                let mut top = TopK::new(k, query_ids.map(|ids| ids[qi]));
                let mut scanned = 0u64;
                match self.encoding {
                    Encoding::Pq => {
                        let mut lut = vec![0f32; self.m * CODEBOOK_SIZE];
                        for j in 0..self.m {
                            let qs = &q[j * dsub..(j + 1) * dsub];
                            for c in 0..CODEBOOK_SIZE {
                                lut[j * CODEBOOK_SIZE + c] = dot(qs, self.codeword(j, c));
                            }
                        }
                        for list in self.probe_order(q, nprobe) {
                            let l = &self.lists[list];
                            for (&id, code) in l.ids.iter().zip(l.codes.chunks_exact(self.m)) {
                                let score: f32 = code
                                    .iter()
                                    .enumerate()
                                    .map(|(j, &c)| lut[j * CODEBOOK_SIZE + c as usize])
                                    .sum();
                                top.push(id, score);
                            }
                            scanned += l.ids.len() as u64;
                        }
                    }
                    Encoding::Flat => {
                        let qn = norm(q);
                        for list in self.probe_order(q, nprobe) {
                            let l = &self.lists[list];
                            for ((&id, v), &vn) in l
                                .ids
                                .iter()
                                .zip(l.vectors.chunks_exact(self.dim))
                                .zip(&l.norms)
                            {
                                top.push(id, cosine_with_norms(q, qn, v, vn));
                            }
                            scanned += l.ids.len() as u64;
                        }
                    }
                }
                (top.into_sorted(), scanned)
            })
            .collect();

        let candidates_scanned = results.iter().map(|r| r.1).sum();
        let rows = results.into_iter().map(|r| r.0).collect();
        Ok((
            NeighborList::from_sorted(k, rows, k > self.len()),
            SearchStats {
                nlist: self.nlist,
                nprobe,
                candidates_scanned,
            },
        ))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BinWriter::create(path)?;
        w.header(INDEX_MAGIC)?;
        w.u32(self.dim as u32)?;
        w.u32(self.nlist as u32)?;
        w.u32(self.m as u32)?;
        w.u8(self.encoding.tag())?;
        w.u8(u8::from(self.trained))?;
        w.f32s(&self.coarse)?;
        w.f32s(&self.codebooks)?;
        for l in &self.lists {
            w.u64(l.ids.len() as u64)?;
            w.u32s(&l.ids)?;
            match self.encoding {
                Encoding::Pq => w.bytes(&l.codes)?,
                Encoding::Flat => w.f32s(&l.vectors)?,
            }
        }
        w.finish()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = BinReader::open(path, "ICPI")?;
        r.header(INDEX_MAGIC)?;
        let dim = r.u32()? as usize;
        let nlist = r.u32()? as usize;
        let m = r.u32()? as usize;
        let encoding = Encoding::from_tag(r.u8()?)?;
        let trained = r.u8()? != 0;
        let params = IndexParams {
            nlist,
            m,
            encoding,
            seed: 0,
        };
        let mut index = Self::new(dim, &params)?;
        if trained {
            let mut coarse = vec![0f32; nlist * dim];
            r.f32_into(&mut coarse)?;
            let book_len = match encoding {
                Encoding::Pq => m * CODEBOOK_SIZE * (dim / m),
                Encoding::Flat => 0,
            };
            let mut books = vec![0f32; book_len];
            r.f32_into(&mut books)?;
            index.coarse = coarse;
            index.codebooks = books;
            index.trained = true;
        }
        for l in index.lists.iter_mut() {
            let len = r.u64()?;
            let len = r.count(len, "list length")?;
            l.ids = vec![0u32; len];
            r.u32_into(&mut l.ids)?;
            match encoding {
                Encoding::Pq => {
                    l.codes = vec![0u8; len * m];
                    r.bytes_into(&mut l.codes)?;
                }
                Encoding::Flat => {
                    l.vectors = vec![0f32; len * dim];
                    r.f32_into(&mut l.vectors)?;
                    l.norms = l.vectors.chunks_exact(dim).map(norm).collect();
                }
            }
            for &id in &l.ids {
                if !index.ids.insert(id) {
                    return Err(Error::format("ICPI", format!("id {id} stored twice")));
                }
            }
        }
        r.finish()?;
        Ok(index)
    }
}
