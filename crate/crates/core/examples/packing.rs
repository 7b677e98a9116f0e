//! Packs an ordering into fixed-length contexts and checks conservation.

use icp::ordering::random_order;
use icp::packing::{coverage_check, pack_contexts, PackOptions};
use icp::synth::random_corpus;

fn main() -> icp::Result<()> {
    let corpus = random_corpus(300, 20, 400, 4);
    let ids: Vec<u32> = (0..corpus.len() as u32).collect();
    let order = random_order(&ids, 4)?;
    for drop_last in [true, false] {
        let opts = PackOptions {
            context_length: 1024,
            drop_last,
            ..PackOptions::default()
        };
        let (contexts, report) = pack_contexts(&order, &corpus, &opts)?;
        let coverage = coverage_check(&contexts, &report, &corpus, &order, &opts);
        println!(
            "drop_last {drop_last}: {report:?}, coverage ok {}",
            coverage.passed()
        );
        let spans: usize = contexts.iter().map(|c| c.spans.len()).sum();
        println!("  {} contexts, {spans} spans", contexts.len());
    }
    Ok(())
}
