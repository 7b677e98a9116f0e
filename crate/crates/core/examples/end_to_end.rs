//! Runs the whole pipeline on a synthetic topical corpus and prints the
//! strategy report.
//!
//! cargo run --release --example end_to_end -- [out_dir]

use icp::pipeline::{run_pipeline, PipelineConfig};
use icp::synth::topic_corpus_jsonl;

fn main() -> icp::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("icp-end-to-end"));
    std::fs::create_dir_all(&out)?;
    let input = out.join("corpus.jsonl");
    std::fs::write(&input, topic_corpus_jsonl(3000, 12, 60, 5))?;

    let config = PipelineConfig {
        dim: 128,
        m: 16,
        context_length: 1024,
        ..PipelineConfig::default()
    };
    let outcome = run_pipeline(&config, &input, &out)?;
    for (stage, status) in &outcome.stages {
        println!("{:<7} {status:?}", stage.to_string());
    }
    print!("{}", outcome.report.to_csv());
    println!("artifacts in {}", out.display());
    Ok(())
}
