//! Recall of the IVF-PQ index against brute force as `nprobe` grows.
//!
//! cargo run --release --example ivfpq_recall -- [n] [spread] [queries]

use std::time::Instant;

use icp::ann::{exact_search, recall, IndexParams, IvfPqIndex};
use icp::synth::gaussian_mixture;

fn main() -> icp::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n: usize = args.first().map_or(100_000, |s| s.parse().expect("n"));
    let spread: f32 = args.get(1).map_or(0.05, |s| s.parse().expect("spread"));
    let n_queries: usize = args.get(2).map_or(1000, |s| s.parse().expect("queries"));

    let (data, _) = gaussian_mixture(n, 64, 32, spread, 7);
    let query_ids: Vec<u32> = (0..n_queries)
        .map(|i| (i * (n / n_queries)) as u32)
        .collect();
    let queries = data.select(&query_ids);
    let truth = exact_search(&data, &queries, Some(&query_ids), 10)?;

    let all: Vec<u32> = (0..n as u32).collect();
    // Rows are i.i.d., so a prefix is a uniform training sample.
    let sample = data.select(&all[..n.min(25_000)]);
    for (label, params) in [
        ("pq m=8", IndexParams::pq(256, 8, 7)),
        ("flat", IndexParams::flat(256, 7)),
    ] {
        let t = Instant::now();
        let mut index = IvfPqIndex::train(&sample, &params)?;
        index.add(&data, &all)?;
        println!("{label}: trained and filled in {:.1?}", t.elapsed());
        for nprobe in [1, 4, 16, 32, 64, 256] {
            let (found, stats) = index.search(&queries, Some(&query_ids), 10, nprobe)?;
            println!(
                "  nprobe {nprobe:>3}  recall@10 {:.4}  lists probed {:.2}%",
                recall(&found, &truth, 10)?,
                100.0 * stats.probed_fraction()
            );
        }
    }
    Ok(())
}
