//! Lloyd's k-means with k-means++ seeding.
//!
//! Shared by the coarse quantizer, the PQ codebooks and the clustering
//! baseline ordering.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::embed::squared_l2;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansParams {
    pub k: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            max_iters: 25,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub dim: usize,
    /// `k x dim`, row-major.
    pub centroids: Vec<f32>,
    /// Centroid index for every input row.
    pub assignments: Vec<u32>,
    pub iterations: usize,
}

impl KMeans {
    pub fn k(&self) -> usize {
        self.centroids.len() / self.dim
    }

    pub fn centroid(&self, c: usize) -> &[f32] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }
}

/// Index and squared distance of the closest centroid; ties go to the lower index.
#[inline]
pub fn nearest_centroid(centroids: &[f32], dim: usize, v: &[f32]) -> (usize, f32) {
    let mut best = (0usize, f32::INFINITY);
    for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
        let d = squared_l2(v, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign(data: &[f32], dim: usize, centroids: &[f32]) -> Vec<(u32, f32)> {
    data.par_chunks_exact(dim)
        .map(|v| {
            let (c, d) = nearest_centroid(centroids, dim, v);
            (c as u32, d)
        })
        .collect()
}

fn plus_plus_init(data: &[f32], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let n = data.len() / dim;
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(row(first));
    let mut dist: Vec<f32> = data
        .par_chunks_exact(dim)
        .map(|v| squared_l2(v, row(first)))
        .collect();

    for _ in 1..k {
        let total: f64 = dist.iter().map(|&d| f64::from(d)).sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &d) in dist.iter().enumerate() {
                acc += f64::from(d);
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = row(pick).to_vec();
        dist.par_iter_mut()
            .zip(data.par_chunks_exact(dim))
            .for_each(|(d, v)| *d = d.min(squared_l2(v, &c)));
        centroids.extend_from_slice(&c);
    }
    centroids
}

/// Runs k-means over `data` (row-major, `dim` columns).
///
/// Empty clusters are reseeded to the point farthest from its centroid.
/// Results depend only on the input and `params`.
pub fn kmeans(data: &[f32], dim: usize, params: &KMeansParams) -> Result<KMeans> {
    if dim == 0 || !data.len().is_multiple_of(dim) {
        return Err(Error::invalid("k-means data is not a whole number of rows"));
    }
    let n = data.len() / dim;
    let k = params.k;
    if k == 0 || k > n {
        return Err(Error::SampleTooSmall {
            got: n,
            need: k.max(1),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centroids = plus_plus_init(data, dim, k, &mut rng);
    let mut assigned = assign(data, dim, &centroids);
    let mut iterations = 0;

    for _ in 0..params.max_iters {
        iterations += 1;
        let mut sums = vec![0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (v, &(c, _)) in data.chunks_exact(dim).zip(&assigned) {
            let c = c as usize;
            counts[c] += 1;
            for (s, &x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(v) {
                *s += f64::from(x);
            }
        }
        let mut far: Vec<f32> = assigned.iter().map(|&(_, d)| d).collect();
        for c in 0..k {
            let dst = &mut centroids[c * dim..(c + 1) * dim];
            if counts[c] == 0 {
                let (idx, _) =
                    far.iter()
                        .enumerate()
                        .fold((0, f32::NEG_INFINITY), |best, (i, &d)| {
                            if d > best.1 {
                                (i, d)
                            } else {
                                best
                            }
                        });
                dst.copy_from_slice(&data[idx * dim..(idx + 1) * dim]);
                far[idx] = f32::NEG_INFINITY;
            } else {
                let inv = 1.0 / counts[c] as f64;
                for (d, &s) in dst.iter_mut().zip(&sums[c * dim..(c + 1) * dim]) {
                    *d = (s * inv) as f32;
                }
            }
        }
        let next = assign(data, dim, &centroids);
        let stable = next.iter().zip(&assigned).all(|(a, b)| a.0 == b.0);
        assigned = next;
        if stable {
            break;
        }
    }

    Ok(KMeans {
        dim,
        centroids,
        assignments: assigned.into_iter().map(|(c, _)| c).collect(),
        iterations,
    })
}
