//! Cuts the concatenated document stream into fixed-length contexts.
//!
//! Documents are laid out in path order, each optionally followed by the
//! separator token, and the stream is cut every `context_length` tokens.
//! Documents straddle context boundaries; nothing is padded.
//!
//! Context file layout (little-endian):
//!
//! ```text
//! "ICPX" | version u32 | L u32 | context_count u64 | token ids u32...
//! ```
//!
//! Every context but the last holds exactly `L` tokens; the last context's
//! length follows from the file size. Spans go to a JSONL sidecar, one line
//! per context.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, SEPARATOR_TOKEN};
use crate::error::{Error, Result};
use crate::io::{BinReader, BinWriter};
use crate::ordering::SortedPath;

pub const CONTEXTS_MAGIC: &[u8; 4] = b"ICPX";
pub const DEFAULT_CONTEXT_LENGTH: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PackOptions {
    pub context_length: usize,
    pub separator: bool,
    pub drop_last: bool,
}

impl Default for PackOptions {
    fn default() -> Self {
        Self {
            context_length: DEFAULT_CONTEXT_LENGTH,
            separator: true,
            drop_last: true,
        }
    }
}

/// A contiguous run of one document's tokens inside a context.
///
/// `doc_offset` indexes the document's token sequence extended by its
/// trailing separator, so a span may end with the separator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub doc: u32,
    pub doc_offset: u32,
    pub start: u32,
    pub len: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedContext {
    pub tokens: Vec<u32>,
    pub spans: Vec<Span>,
}

impl PackedContext {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackReport {
    pub contexts: usize,
    /// Stream length, separators included.
    pub total_tokens: u64,
    pub packed_tokens: u64,
    pub dropped_tokens: u64,
    pub separators: u64,
}

/// Packs the documents of `order` into contexts of `context_length` tokens.
pub fn pack_contexts(
    order: &SortedPath,
    corpus: &Corpus,
    opts: &PackOptions,
) -> Result<(Vec<PackedContext>, PackReport)> {
    let l = opts.context_length;
    if l < 2 {
        return Err(Error::invalid(format!(
            "context length must be >= 2, got {l}"
        )));
    }
    let mut contexts = Vec::new();
    let mut current = PackedContext {
        tokens: Vec::with_capacity(l),
        spans: Vec::new(),
    };
    let mut total = 0u64;
    let mut separators = 0u64;
    let mut piece = Vec::new();

    for &id in &order.order {
        let doc = corpus.get(id).ok_or(Error::UnknownId(id))?;
        piece.clear();
        piece.extend_from_slice(&doc.tokens);
        if opts.separator {
            piece.push(SEPARATOR_TOKEN);
            separators += 1;
        }
        total += piece.len() as u64;

        let mut offset = 0;
        while offset < piece.len() {
            let take = (l - current.tokens.len()).min(piece.len() - offset);
            current.spans.push(Span {
                doc: id,
                doc_offset: offset as u32,
                start: current.tokens.len() as u32,
                len: take as u32,
            });
            current
                .tokens
                .extend_from_slice(&piece[offset..offset + take]);
            offset += take;
            if current.tokens.len() == l {
                contexts.push(std::mem::replace(
                    &mut current,
                    PackedContext {
                        tokens: Vec::with_capacity(l),
                        spans: Vec::new(),
                    },
                ));
            }
        }
    }

    let mut dropped = 0u64;
    if !current.tokens.is_empty() {
        if opts.drop_last {
            dropped = current.tokens.len() as u64;
        } else {
            contexts.push(current);
        }
    }
    let report = PackReport {
        contexts: contexts.len(),
        total_tokens: total,
        packed_tokens: total - dropped,
        dropped_tokens: dropped,
        separators,
    };
    Ok((contexts, report))
}

/// Seeded global shuffle of packed contexts.
pub fn shuffle_contexts(contexts: &mut [PackedContext], seed: u64) {
    contexts.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageFailure {
    pub doc: Option<u32>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CoverageReport {
    pub failures: Vec<CoverageFailure>,
    /// Documents that occur more than once in the ordering, with their
    /// multiplicity. Expected for the kNN baseline.
    pub repeated: Vec<(u32, usize)>,
}

impl CoverageReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn into_result(self) -> Result<Self> {
        match self.failures.first() {
            None => Ok(self),
            Some(f) => Err(Error::invalid(match f.doc {
                Some(d) => format!("coverage check failed for document {d}: {}", f.message),
                None => format!("coverage check failed: {}", f.message),
            })),
        }
    }
}

/// Verifies token conservation and per-document coverage of a pack.
///
/// Contexts must be in packing order (before any shuffle).
pub fn coverage_check(
    contexts: &[PackedContext],
    report: &PackReport,
    corpus: &Corpus,
    order: &SortedPath,
    opts: &PackOptions,
) -> CoverageReport {
    let mut out = CoverageReport::default();
    let mut fail = |doc: Option<u32>, message: String| {
        out.failures.push(CoverageFailure { doc, message });
    };

    let packed: u64 = contexts.iter().map(|c| c.len() as u64).sum();
    if packed != report.packed_tokens {
        fail(
            None,
            format!(
                "report says {} packed tokens, contexts hold {packed}",
                report.packed_tokens
            ),
        );
    }
    if report.total_tokens != report.packed_tokens + report.dropped_tokens {
        fail(None, "input tokens != packed + dropped".to_string());
    }
    if contexts.len() != report.contexts {
        fail(None, "context count disagrees with report".to_string());
    }
    for (i, c) in contexts.iter().enumerate() {
        if i + 1 < contexts.len() && c.len() != opts.context_length {
            fail(
                None,
                format!(
                    "context {i} has {} tokens, expected {}",
                    c.len(),
                    opts.context_length
                ),
            );
        }
        let span_total: usize = c.spans.iter().map(|s| s.len as usize).sum();
        if span_total != c.len() {
            fail(
                None,
                format!("context {i} spans cover {span_total} of {} tokens", c.len()),
            );
        }
    }

    // Expected coverage per document, walking the stream in path order;
    // stream positions at or beyond `packed` were dropped.
    let sep = usize::from(opts.separator);
    let mut expected: HashMap<u32, usize> = HashMap::new();
    let mut occurrences: HashMap<u32, usize> = HashMap::new();
    let mut pos = 0u64;
    let mut stream_total = 0u64;
    for &id in &order.order {
        let Some(doc) = corpus.get(id) else {
            fail(
                Some(id),
                "ordering references an unknown document".to_string(),
            );
            continue;
        };
        let len = (doc.tokens.len() + sep) as u64;
        let kept = packed.saturating_sub(pos).min(len);
        *expected.entry(id).or_default() += kept as usize;
        *occurrences.entry(id).or_default() += 1;
        pos += len;
        stream_total += len;
    }
    if stream_total != report.total_tokens {
        fail(
            None,
            format!(
                "stream has {stream_total} tokens, report says {}",
                report.total_tokens
            ),
        );
    }

    let mut actual: HashMap<u32, usize> = HashMap::new();
    for c in contexts {
        for s in &c.spans {
            let Some(doc) = corpus.get(s.doc) else {
                fail(
                    Some(s.doc),
                    "span references an unknown document".to_string(),
                );
                continue;
            };
            let (start, len) = (s.start as usize, s.len as usize);
            let offset = s.doc_offset as usize;
            let got = &c.tokens[start.min(c.len())..(start + len).min(c.len())];
            let want: Vec<u32> = doc
                .tokens
                .iter()
                .copied()
                .chain(std::iter::repeat_n(SEPARATOR_TOKEN, sep))
                .skip(offset)
                .take(len)
                .collect();
            if got != want.as_slice() {
                fail(
                    Some(s.doc),
                    format!("span at context offset {start} does not match document tokens"),
                );
            }
            *actual.entry(s.doc).or_default() += len;
        }
    }

    let mut ids: Vec<u32> = expected.keys().copied().collect();
    ids.sort_unstable();
    for id in ids {
        let want = expected[&id];
        let got = actual.get(&id).copied().unwrap_or(0);
        if want != got {
            fail(
                Some(id),
                format!("expected {want} packed tokens, found {got}"),
            );
        }
    }

    let mut repeated: Vec<(u32, usize)> = occurrences.into_iter().filter(|&(_, n)| n > 1).collect();
    repeated.sort_unstable();
    if order.strategy.is_permutation() {
        if let Some(&(id, n)) = repeated.first() {
            fail(
                Some(id),
                format!("appears {n} times in a permutation ordering"),
            );
        }
        if let Some(missing) = corpus
            .documents()
            .iter()
            .find(|d| !expected.contains_key(&d.id))
        {
            fail(
                Some(missing.id),
                "document missing from ordering".to_string(),
            );
        }
    }
    out.repeated = repeated;
    out
}

#[derive(Serialize, Deserialize)]
struct SpanLine {
    context: usize,
    spans: Vec<Span>,
}

/// Writes the context file and its spans sidecar.
pub fn write_contexts(
    contexts: &[PackedContext],
    context_length: usize,
    path: &Path,
    spans_path: &Path,
) -> Result<()> {
    let mut w = BinWriter::create(path)?;
    w.header(CONTEXTS_MAGIC)?;
    w.u32(context_length as u32)?;
    w.u64(contexts.len() as u64)?;
    for (i, c) in contexts.iter().enumerate() {
        if c.len() > context_length || (i + 1 < contexts.len() && c.len() != context_length) {
            return Err(Error::invalid(
                "only the final context may be shorter than L",
            ));
        }
        w.u32s(&c.tokens)?;
    }
    w.finish()?;

    let mut s = BufWriter::new(File::create(spans_path)?);
    for (i, c) in contexts.iter().enumerate() {
        let line = SpanLine {
            context: i,
            spans: c.spans.clone(),
        };
        serde_json::to_writer(&mut s, &line).map_err(std::io::Error::from)?;
        s.write_all(b"\n")?;
    }
    s.flush()?;
    Ok(())
}

/// Reads contexts back; spans are attached when the sidecar is given.
pub fn read_contexts(
    path: &Path,
    spans_path: Option<&Path>,
) -> Result<(usize, Vec<PackedContext>)> {
    let file_len = std::fs::metadata(path)?.len();
    let mut r = BinReader::open(path, "ICPX")?;
    r.header(CONTEXTS_MAGIC)?;
    let l = r.u32()? as u64;
    let count = r.u64()?;
    let payload = file_len.saturating_sub(20);
    if payload % 4 != 0 {
        return Err(Error::format("ICPX", "payload is not whole u32 tokens"));
    }
    let total = payload / 4;
    let last = match count {
        0 if total == 0 => 0,
        0 => {
            return Err(Error::format(
                "ICPX",
                "tokens present but context count is 0",
            ))
        }
        c => total
            .checked_sub((c - 1) * l)
            .filter(|&last| last >= 1 && last <= l)
            .ok_or_else(|| {
                Error::format("ICPX", "token count inconsistent with L and context count")
            })?,
    };
    let mut contexts = Vec::with_capacity(count as usize);
    for i in 0..count {
        let len = if i + 1 == count { last } else { l } as usize;
        let mut tokens = vec![0u32; len];
        r.u32_into(&mut tokens)?;
        contexts.push(PackedContext {
            tokens,
            spans: Vec::new(),
        });
    }
    r.finish()?;

    if let Some(sp) = spans_path {
        let reader = BufReader::new(File::open(sp)?);
        for (i, line) in reader.lines().enumerate() {
            let parsed: SpanLine =
                serde_json::from_str(&line?).map_err(|e| Error::MalformedLine {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            let ctx = contexts.get_mut(parsed.context).ok_or_else(|| {
                Error::format("spans", format!("context {} out of range", parsed.context))
            })?;
            ctx.spans = parsed.spans;
        }
    }
    Ok((l as usize, contexts))
}
