//! Document ingestion, the stand-in tokenizer, and the on-disk document store.
//!
//! A store is a directory holding `manifest.json`, `tokens.icpt` and
//! `documents.jsonl`. The token file layout is:
//!
//! ```text
//! "ICPT" | version u32 | doc_count u64 | per doc: token_count u32, token ids u32...
//! ```

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::info;

use crate::error::{Error, Result};
use crate::io::{BinReader, BinWriter};

pub const PAD_TOKEN: u32 = 0;
pub const SEPARATOR_TOKEN: u32 = 1;
pub const UNKNOWN_TOKEN: u32 = 2;
/// First id handed out to real words.
pub const FIRST_WORD_TOKEN: u32 = 3;

pub const TOKENS_MAGIC: &[u8; 4] = b"ICPT";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TOKENS_FILE: &str = "tokens.icpt";
pub const DOCUMENTS_FILE: &str = "documents.jsonl";

/// Hash-of-whitespace-word tokenizer settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub vocab_size: u32,
}

impl TokenizerConfig {
    pub const ID: &'static str = "ws-fnv1a64-v1";

    pub fn new(vocab_size: u32) -> Result<Self> {
        if vocab_size < 4 {
            return Err(Error::invalid(format!(
                "vocab_size must be at least 4, got {vocab_size}"
            )));
        }
        Ok(Self { vocab_size })
    }
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self { vocab_size: 32_000 }
    }
}

/// 64-bit FNV-1a. Stable across platforms and releases, unlike `DefaultHasher`.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Splits on whitespace and maps each word to a non-reserved id.
pub fn tokenize(text: &str, cfg: &TokenizerConfig) -> Vec<u32> {
    let span = u64::from(cfg.vocab_size - FIRST_WORD_TOKEN);
    text.split_whitespace()
        .map(|word| FIRST_WORD_TOKEN + (fnv1a64(word.as_bytes()) % span) as u32)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: u32,
    pub text: String,
    pub tokens: Vec<u32>,
}

impl Document {
    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub document_count: u64,
    pub total_tokens: u64,
    pub tokenizer_id: String,
    pub vocab_size: u32,
}

impl CorpusManifest {
    fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

/// An in-memory corpus with dense ordinal ids `0..N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    tokenizer: TokenizerConfig,
    documents: Vec<Document>,
}

#[derive(Deserialize)]
struct InputLine {
    text: String,
}

#[derive(Serialize, Deserialize)]
struct StoredText<'a> {
    id: u32,
    #[serde(borrow)]
    text: std::borrow::Cow<'a, str>,
}

impl Corpus {
    /// Builds a corpus from pre-tokenized documents, dropping empty ones.
    pub fn from_tokens(tokens: Vec<Vec<u32>>, tokenizer: TokenizerConfig) -> Result<Self> {
        let documents: Vec<Document> = tokens
            .into_iter()
            .filter(|t| !t.is_empty())
            .enumerate()
            .map(|(i, tokens)| Document {
                id: i as u32,
                text: String::new(),
                tokens,
            })
            .collect();
        if documents.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok(Self {
            tokenizer,
            documents,
        })
    }

    pub fn tokenizer(&self) -> &TokenizerConfig {
        &self.tokenizer
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&Document> {
        self.documents.get(id as usize)
    }

    pub fn manifest(&self) -> CorpusManifest {
        CorpusManifest {
            document_count: self.documents.len() as u64,
            total_tokens: self.documents.iter().map(|d| d.tokens.len() as u64).sum(),
            tokenizer_id: TokenizerConfig::ID.to_string(),
            vocab_size: self.tokenizer.vocab_size,
        }
    }

    /// Keeps the listed ids (ascending) and renumbers them densely.
    pub(crate) fn retain_ids(&self, kept: &[u32]) -> Corpus {
        let documents = kept
            .iter()
            .enumerate()
            .map(|(new, &old)| {
                let src = &self.documents[old as usize];
                Document {
                    id: new as u32,
                    text: src.text.clone(),
                    tokens: src.tokens.clone(),
                }
            })
            .collect();
        Corpus {
            tokenizer: self.tokenizer,
            documents,
        }
    }

    /// Writes the store directory. Output bytes depend only on the corpus.
    pub fn save(&self, dir: &Path) -> Result<CorpusManifest> {
        fs::create_dir_all(dir)?;
        let mut w = BinWriter::create(&dir.join(TOKENS_FILE))?;
        w.header(TOKENS_MAGIC)?;
        w.u64(self.documents.len() as u64)?;
        for doc in &self.documents {
            w.u32(doc.tokens.len() as u32)?;
            w.u32s(&doc.tokens)?;
        }
        w.finish()?;

        let mut texts = BufWriter::new(File::create(dir.join(DOCUMENTS_FILE))?);
        for doc in &self.documents {
            let line = StoredText {
                id: doc.id,
                text: doc.text.as_str().into(),
            };
            serde_json::to_writer(&mut texts, &line).map_err(std::io::Error::from)?;
            texts.write_all(b"\n")?;
        }
        texts.flush()?;

        let manifest = self.manifest();
        fs::write(dir.join(MANIFEST_FILE), manifest.to_json())?;
        Ok(manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = read_manifest(dir)?;
        let tokenizer = TokenizerConfig::new(manifest.vocab_size)?;
        let tokens = read_tokens(&dir.join(TOKENS_FILE))?;

        let texts = BufReader::new(File::open(dir.join(DOCUMENTS_FILE))?);
        let mut documents = Vec::with_capacity(tokens.len());
        for (i, (line, tokens)) in texts.lines().zip(tokens).enumerate() {
            let line = line?;
            let stored: StoredText =
                serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            if stored.id as usize != i {
                return Err(Error::format(
                    "document store",
                    "ids are not dense ordinals",
                ));
            }
            documents.push(Document {
                id: stored.id,
                text: stored.text.into_owned(),
                tokens,
            });
        }
        if documents.len() as u64 != manifest.document_count {
            return Err(Error::format(
                "document store",
                "text and token files disagree on document count",
            ));
        }
        if documents.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok(Self {
            tokenizer,
            documents,
        })
    }
}

fn read_manifest(dir: &Path) -> Result<CorpusManifest> {
    let raw = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    serde_json::from_str(&raw).map_err(|e| Error::format("manifest", e.to_string()))
}

fn read_tokens(path: &Path) -> Result<Vec<Vec<u32>>> {
    let mut r = BinReader::open(path, "ICPT")?;
    r.header(TOKENS_MAGIC)?;
    let count = r.u64()?;
    let count = r.count(count, "document count")?;
    let mut docs = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let mut tokens = vec![0u32; len];
        r.u32_into(&mut tokens)?;
        docs.push(tokens);
    }
    r.finish()?;
    Ok(docs)
}

/// Reads JSONL documents. Ids follow line order; documents that tokenize to
/// nothing are dropped and counted.
pub fn ingest_reader(reader: impl BufRead, cfg: &TokenizerConfig) -> Result<Corpus> {
    let mut texts = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: InputLine = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            line: i + 1,
            message: e.to_string(),
        })?;
        texts.push(parsed.text);
    }
    let tokenized: Vec<(String, Vec<u32>)> = texts
        .into_par_iter()
        .map(|text| {
            let tokens = tokenize(&text, cfg);
            (text, tokens)
        })
        .collect();

    let total = tokenized.len();
    let documents: Vec<Document> = tokenized
        .into_iter()
        .filter(|(_, t)| !t.is_empty())
        .enumerate()
        .map(|(i, (text, tokens))| Document {
            id: i as u32,
            text,
            tokens,
        })
        .collect();
    let skipped = total - documents.len();
    if skipped > 0 {
        info!(skipped, "dropped empty documents during ingest");
    }
    if documents.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(Corpus {
        tokenizer: *cfg,
        documents,
    })
}

pub fn ingest(jsonl_path: &Path, cfg: &TokenizerConfig) -> Result<Corpus> {
    ingest_reader(BufReader::new(File::open(jsonl_path)?), cfg)
}

/// Recomputes the manifest from the token file and checks it against the
/// persisted one.
pub fn corpus_stats(dir: &Path) -> Result<CorpusManifest> {
    let persisted = read_manifest(dir)?;
    let tokens = read_tokens(&dir.join(TOKENS_FILE))?;
    if tokens.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let recomputed = CorpusManifest {
        document_count: tokens.len() as u64,
        total_tokens: tokens.iter().map(|t| t.len() as u64).sum(),
        tokenizer_id: persisted.tokenizer_id.clone(),
        vocab_size: persisted.vocab_size,
    };
    if recomputed.to_json() != persisted.to_json() {
        return Err(Error::format(
            "manifest",
            format!("persisted manifest {persisted:?} does not match store {recomputed:?}"),
        ));
    }
    Ok(recomputed)
}
