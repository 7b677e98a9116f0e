//! Side-by-side metrics for every ordering strategy on a clustered corpus.
//!
//! cargo run --release --example strategy_report -- [spread] [context_length]

use icp::ann::exact_search;
use icp::graph::build_graph;
use icp::metrics::{strategy_report, ReportConfig};
use icp::ordering::Strategy;
use icp::packing::PackOptions;
use icp::synth::{gaussian_mixture, random_corpus};

fn main() -> icp::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let spread: f32 = args.first().map_or(0.06, |s| s.parse().expect("spread"));
    let context_length: usize = args.get(1).map_or(1024, |s| s.parse().expect("length"));

    let n = 5000;
    let (embeddings, _) = gaussian_mixture(n, 64, 20, spread, 42);
    let corpus = random_corpus(n, 50, 300, 42);
    let neighbors = exact_search(
        &embeddings,
        &embeddings,
        Some(&(0..n as u32).collect::<Vec<_>>()),
        10,
    )?;
    let graph = build_graph(&neighbors)?;

    let config = ReportConfig {
        pack: PackOptions {
            context_length,
            ..PackOptions::default()
        },
        knn_k: 5,
        n_clusters: 20,
        ..ReportConfig::default()
    };
    let report = strategy_report(
        &corpus,
        &embeddings,
        &neighbors,
        &graph,
        &Strategy::ALL,
        &config,
    )?;
    print!("{}", report.to_csv());
    Ok(())
}
