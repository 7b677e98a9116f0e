//! Tokenizes a JSONL corpus and prints its manifest.
//!
//! cargo run --example ingest -- [path.jsonl]

use std::io::Cursor;

use icp::corpus::{ingest, ingest_reader, TokenizerConfig};
use icp::synth::topic_corpus_jsonl;

fn main() -> icp::Result<()> {
    let cfg = TokenizerConfig::default();
    let corpus = match std::env::args().nth(1) {
        Some(path) => ingest(path.as_ref(), &cfg)?,
        None => ingest_reader(Cursor::new(topic_corpus_jsonl(200, 4, 10, 1)), &cfg)?,
    };
    let m = corpus.manifest();
    println!(
        "{} documents, {} tokens, tokenizer {} (vocab {})",
        m.document_count, m.total_tokens, m.tokenizer_id, m.vocab_size
    );
    let first = &corpus.documents()[0];
    let preview: String = first.text.chars().take(60).collect();
    println!("doc 0: {preview:?}");
    println!(
        "  tokens {:?}...",
        &first.tokens[..first.tokens.len().min(8)]
    );
    Ok(())
}
