//! Near-duplicate removal from retrieval scores.

use icp::ann::exact_search;
use icp::dedup::{apply_keep_set, find_duplicates};
use icp::embed::EmbeddingStore;
use icp::synth::{random_corpus, random_unit_vectors};

fn main() -> icp::Result<()> {
    let base = random_unit_vectors(500, 64, 3);
    // Rows 500.. are slightly perturbed copies of rows 0..50.
    let mut rows: Vec<Vec<f32>> = base.rows().map(<[f32]>::to_vec).collect();
    for i in 0..50 {
        rows.push(
            base.row(i)
                .iter()
                .map(|x| x + 0.002 * ((i % 7) as f32 - 3.0))
                .collect(),
        );
    }
    let mut data = EmbeddingStore::from_rows(&rows)?;
    data.normalize()?;
    let ids: Vec<u32> = (0..data.len() as u32).collect();
    let neighbors = exact_search(&data, &data, Some(&ids), 10)?;

    for threshold in [0.99, 0.95, 0.5] {
        let keep = find_duplicates(&neighbors, threshold)?;
        println!(
            "threshold {threshold}: kept {} removed {}",
            keep.kept.len(),
            keep.removed.len()
        );
    }
    let keep = find_duplicates(&neighbors, 0.95)?;
    let corpus = random_corpus(data.len(), 10, 20, 3);
    let d = apply_keep_set(&corpus, &data, &neighbors, &keep)?;
    println!(
        "after dedup: {} documents, ids renumbered 0..{}",
        d.corpus.len(),
        d.corpus.len()
    );
    Ok(())
}
