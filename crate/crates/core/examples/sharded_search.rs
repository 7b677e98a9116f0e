//! Sharded exact search returns the same neighbors as one global scan.

use icp::ann::{exact_search, recall, sharded_search, Shard, ShardBackend};
use icp::synth::random_unit_vectors;

fn main() -> icp::Result<()> {
    let data = random_unit_vectors(4000, 32, 5);
    let ids: Vec<u32> = (0..data.len() as u32).collect();
    let global = exact_search(&data, &data, Some(&ids), 10)?;
    for size in [4000, 1000, 333] {
        let shards = Shard::split(&data, size);
        let merged = sharded_search(&shards, &data, Some(&ids), 10, ShardBackend::Exact)?;
        println!(
            "{} shards: recall vs global {:.4}, identical {}",
            shards.len(),
            recall(&merged, &global, 10)?,
            merged == global
        );
    }
    Ok(())
}
