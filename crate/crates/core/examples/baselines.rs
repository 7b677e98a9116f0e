//! The three baseline orderings on one small corpus.

use icp::ann::exact_search;
use icp::metrics::repetition_rate;
use icp::ordering::{cluster_order, knn_sequence, random_order, GroupOrder};
use icp::synth::gaussian_mixture;

fn main() -> icp::Result<()> {
    let (data, labels) = gaussian_mixture(600, 16, 4, 0.1, 2);
    let ids: Vec<u32> = (0..data.len() as u32).collect();
    let neighbors = exact_search(&data, &data, Some(&ids), 5)?;

    let orders = [
        random_order(&ids, 2)?,
        knn_sequence(&neighbors, 5, GroupOrder::Ids)?,
        cluster_order(&data, 4, 2)?,
    ];
    for path in orders {
        let switches = path
            .order
            .windows(2)
            .filter(|w| labels[w[0] as usize] != labels[w[1] as usize])
            .count();
        println!(
            "{:<8} length {:>5}  repetition {:.3}  topic switches {switches}",
            path.strategy.name(),
            path.len(),
            repetition_rate(&path.order),
        );
    }
    Ok(())
}
