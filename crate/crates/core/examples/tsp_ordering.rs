//! Greedy maximum-weight traversal against the exhaustive optimum and
//! random orders on small graphs.

use icp::graph::DocumentGraph;
use icp::ordering::{brute_force_max_path, path_weight, random_order, tsp_path, TspOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> icp::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    println!("  n   optimum   greedy   random  jumps");
    for n in 4..=9 {
        let mut edges = Vec::new();
        for a in 0..n as u32 {
            for b in a + 1..n as u32 {
                if rng.random_bool(0.6) {
                    edges.push((a, b, rng.random_range(0.05f32..1.0)));
                }
            }
        }
        let graph = DocumentGraph::from_edges(n, &edges)?;
        let (_, best) = brute_force_max_path(&graph)?;
        let greedy = tsp_path(&graph, &TspOptions::deterministic())?;
        let ids: Vec<u32> = (0..n as u32).collect();
        let random = path_weight(&random_order(&ids, n as u64)?.order, &graph)?;
        println!(
            "{n:>3} {best:>9.3} {:>8.3} {random:>8.3} {:>6}",
            greedy.weight.unwrap_or_default(),
            greedy.jumps.len()
        );
    }
    Ok(())
}
