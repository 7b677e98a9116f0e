//! Corpus ordering for pretraining: retrieve each document's nearest
//! neighbors, drop near-duplicates, link documents into a similarity graph,
//! walk it with a greedy maximum-weight traversal and pack the resulting
//! order into fixed-length training contexts.
//!
//! The stages, in pipeline order:
//!
//! - [`corpus`]: JSONL ingest, the hash tokenizer and the document store
//! - [`embed`]: embeddings, cosine similarity and the hash embedder
//! - [`ann`]: exact and IVF-PQ top-k search, sharded search, recall
//! - [`dedup`]: near-duplicate removal from retrieval scores
//! - [`graph`]: the symmetrized kNN document graph
//! - [`ordering`]: the greedy path traversal and baseline orderings
//! - [`packing`]: fixed-length context packing and coverage checks
//! - [`metrics`]: intra-context similarity, repetition, strategy reports
//! - [`pipeline`]: config and the staged, resumable end-to-end run

pub mod ann;
pub mod corpus;
pub mod dedup;
pub mod embed;
pub mod error;
pub mod graph;
mod io;
pub mod kmeans;
pub mod metrics;
pub mod ordering;
pub mod packing;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
