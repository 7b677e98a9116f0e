//! Seeded synthetic corpora and embeddings for examples, tests and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::corpus::{Corpus, TokenizerConfig, FIRST_WORD_TOKEN};
use crate::embed::EmbeddingStore;

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    (0..dim)
        .map(|_| rng.sample::<f32, _>(StandardNormal))
        .collect()
}

fn unit(mut v: Vec<f32>) -> Vec<f32> {
    let n = crate::embed::norm(&v);
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Unit-normalized samples from a mixture of `clusters` isotropic Gaussians
/// centered on random unit vectors. `spread` is the per-coordinate standard
/// deviation before normalization. Returns the store and each row's cluster.
pub fn gaussian_mixture(
    n: usize,
    dim: usize,
    clusters: usize,
    spread: f32,
    seed: u64,
) -> (EmbeddingStore, Vec<u32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f32>> = (0..clusters)
        .map(|_| unit(gaussian(&mut rng, dim)))
        .collect();
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let c = rng.random_range(0..clusters);
        labels.push(c as u32);
        let noise = gaussian(&mut rng, dim);
        data.extend(unit(
            centers[c]
                .iter()
                .zip(noise)
                .map(|(m, z)| m + spread * z)
                .collect(),
        ));
    }
    let store = EmbeddingStore::normalized(dim, data).expect("mixture rows are nonzero");
    (store, labels)
}

/// Random unit vectors.
pub fn random_unit_vectors(n: usize, dim: usize, seed: u64) -> EmbeddingStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n).flat_map(|_| gaussian(&mut rng, dim)).collect();
    EmbeddingStore::normalized(dim, data).expect("gaussian rows are nonzero")
}

/// A corpus of random token sequences with lengths uniform in `min_len..=max_len`.
pub fn random_corpus(n: usize, min_len: usize, max_len: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = TokenizerConfig::default();
    let docs = (0..n)
        .map(|_| {
            let len = rng.random_range(min_len.max(1)..=max_len.max(1));
            (0..len)
                .map(|_| rng.random_range(FIRST_WORD_TOKEN..cfg.vocab_size))
                .collect()
        })
        .collect();
    Corpus::from_tokens(docs, cfg).expect("documents are non-empty")
}

/// JSONL lines of topical text: each document draws most of its words from
/// one topic's vocabulary. The last `duplicates` lines repeat earlier
/// documents verbatim.
pub fn topic_corpus_jsonl(n_docs: usize, n_topics: usize, duplicates: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut texts: Vec<String> = Vec::with_capacity(n_docs);
    let unique = n_docs.saturating_sub(duplicates).max(1);
    for _ in 0..unique {
        let topic = rng.random_range(0..n_topics.max(1));
        let len = rng.random_range(40..160);
        let words: Vec<String> = (0..len)
            .map(|_| {
                if rng.random_bool(0.8) {
                    format!("t{topic}w{}", rng.random_range(0..60))
                } else {
                    format!("common{}", rng.random_range(0..200))
                }
            })
            .collect();
        texts.push(words.join(" "));
    }
    for _ in unique..n_docs {
        let src = rng.random_range(0..unique);
        texts.push(texts[src].clone());
    }
    texts
        .into_iter()
        .map(|t| format!("{}\n", serde_json::json!({ "text": t })))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixture_is_normalized_and_seeded() {
        let (a, la) = gaussian_mixture(50, 8, 3, 0.1, 1);
        let (b, lb) = gaussian_mixture(50, 8, 3, 0.1, 1);
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert!(a.is_normalized());
    }

    #[test]
    fn topic_lines_parse() {
        let text = topic_corpus_jsonl(10, 2, 3, 0);
        assert_eq!(text.lines().count(), 10);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[7..].iter().all(|l| lines[..7].contains(l)));
    }
}
