//! Builds the symmetrized kNN graph and prints its degree profile.

use icp::ann::exact_search;
use icp::graph::build_graph;
use icp::synth::gaussian_mixture;

fn main() -> icp::Result<()> {
    let (data, _) = gaussian_mixture(2000, 32, 8, 0.1, 11);
    let ids: Vec<u32> = (0..data.len() as u32).collect();
    let k = 10;
    let neighbors = exact_search(&data, &data, Some(&ids), k)?;
    let graph = build_graph(&neighbors)?;

    let mut degrees: Vec<usize> = (0..graph.node_count() as u32)
        .map(|u| graph.degree(u))
        .collect();
    degrees.sort_unstable();
    println!(
        "{} nodes, {} edges (at most N*k = {})",
        graph.node_count(),
        graph.edge_count(),
        graph.node_count() * k,
    );
    // Symmetrization lifts every degree to at least k; hubs collect many more.
    for q in [0.0, 0.5, 0.9, 0.99, 1.0] {
        let d = degrees[((degrees.len() - 1) as f64 * q) as usize];
        println!("  degree p{:<3} {d}", (q * 100.0) as u32);
    }
    Ok(())
}
