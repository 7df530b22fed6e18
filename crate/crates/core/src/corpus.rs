//! Document ingestion and chunking.
//!
//! A corpus is a line-delimited JSON file, one document per line with the
//! fields `doc_id`, `title`, `body` (and an optional `source_tag`). Each
//! document is split into ordered chunks no longer than
//! [`CorpusConfig::max_chunk_size`] characters, cutting at the latest
//! boundary character that fits and falling back to a hard cut when none
//! does. Chunks are the nodes of the interaction graph.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::providers::EmbeddingVector;

/// Opaque document identifier, unique within a corpus.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DocId(pub String);

impl DocId {
    pub fn new(id: impl Into<String>) -> Self {
        DocId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Opaque chunk identifier: `"<doc_id>#<position>"` with a zero-padded
/// position so lexicographic order matches document order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChunkId(pub String);

impl ChunkId {
    pub fn new(doc_id: &DocId, position: usize) -> Self {
        ChunkId(format!("{}#{:05}", doc_id.0, position))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ChunkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A source document prior to chunking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: DocId,
    pub title: String,
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_tag: Option<String>,
}

impl Document {
    /// Build a document, rejecting bodies that are empty after trimming.
    pub fn new(
        doc_id: impl Into<String>,
        title: impl Into<String>,
        body: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let doc_id = DocId::new(doc_id);
        let body = body.into();
        if body.trim().is_empty() {
            return Err(CorpusError::EmptyBody { doc_id });
        }
        Ok(Document {
            doc_id,
            title: title.into(),
            body,
            source_tag: None,
        })
    }
}

/// One text chunk: the minimal retrievable unit and a graph node.
///
/// `keywords` and `embedding` start empty and are filled by the graph
/// builder through the configured providers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: ChunkId,
    pub doc_id: DocId,
    /// 0-based order within the source document, gapless.
    pub position: usize,
    pub text: String,
    /// Inherited document title; never used as a keyword.
    pub title: String,
    #[serde(default)]
    pub keywords: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddingVector>,
}

/// Chunking parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    /// Maximum chunk length in characters (not bytes, not tokens).
    pub max_chunk_size: usize,
    /// Boundary characters; splits happen immediately after one of these.
    pub split_punctuation: Vec<char>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            max_chunk_size: 512,
            split_punctuation: vec!['.', '!', '?', '\n'],
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.max_chunk_size == 0 {
            return Err(CorpusError::InvalidConfig {
                reason: "max_chunk_size must be at least 1".into(),
            });
        }
        if self.split_punctuation.is_empty() {
            return Err(CorpusError::InvalidConfig {
                reason: "split_punctuation must not be empty".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus file {path} line {line}: malformed record: {reason}")]
    MalformedRecord {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("corpus file {path} line {line}: duplicate doc_id {doc_id}")]
    DuplicateDocId {
        path: String,
        line: usize,
        doc_id: DocId,
    },
    #[error("document {doc_id} has an empty body")]
    EmptyBody { doc_id: DocId },
    #[error("invalid corpus config: {reason}")]
    InvalidConfig { reason: String },
}

#[derive(Deserialize)]
struct RawRecord {
    doc_id: String,
    title: String,
    body: String,
    #[serde(default)]
    source_tag: Option<String>,
}

/// Read a line-delimited corpus file into documents, preserving file order.
///
/// Blank lines are skipped. A duplicate `doc_id` or a malformed record is an
/// error naming the offending line.
pub fn ingest_corpus(path: &Path, config: &CorpusConfig) -> Result<Vec<Document>, CorpusError> {
    config.validate()?;
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: display.clone(),
        source,
    })?;
    let reader = BufReader::new(file);

    let mut docs: Vec<Document> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: display.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
                path: display.clone(),
                line: line_no,
                reason: e.to_string(),
            })?;
        if raw.body.trim().is_empty() {
            return Err(CorpusError::MalformedRecord {
                path: display.clone(),
                line: line_no,
                reason: format!("document {} has an empty body", raw.doc_id),
            });
        }
        let doc_id = DocId::new(raw.doc_id);
        if !seen.insert(doc_id.clone()) {
            return Err(CorpusError::DuplicateDocId {
                path: display,
                line: line_no,
                doc_id,
            });
        }
        docs.push(Document {
            doc_id,
            title: raw.title,
            body: raw.body,
            source_tag: raw.source_tag,
        });
    }
    Ok(docs)
}

/// Split a document into chunks.
///
/// Greedy rule: take up to `max_chunk_size` characters; if more text remains,
/// cut just after the latest boundary character inside the window, or hard-cut
/// at `max_chunk_size` when the window has no boundary. Whitespace between
/// chunks is dropped, so joining chunk texts recovers the body modulo
/// boundary whitespace.
pub fn chunk_document(doc: &Document, config: &CorpusConfig) -> Result<Vec<Chunk>, CorpusError> {
    config.validate()?;
    let pieces = split_text(&doc.body, config);
    Ok(pieces
        .into_iter()
        .enumerate()
        .map(|(position, text)| Chunk {
            chunk_id: ChunkId::new(&doc.doc_id, position),
            doc_id: doc.doc_id.clone(),
            position,
            text,
            title: doc.title.clone(),
            keywords: Vec::new(),
            embedding: None,
        })
        .collect())
}

fn split_text(body: &str, config: &CorpusConfig) -> Vec<String> {
    let chars: Vec<char> = body.chars().collect();
    let max = config.max_chunk_size;
    let mut pieces = Vec::new();
    let mut i = skip_whitespace(&chars, 0);
    while i < chars.len() {
        let remaining = chars.len() - i;
        let cut_end = if remaining <= max {
            chars.len()
        } else {
            let window = &chars[i..i + max];
            match window
                .iter()
                .rposition(|c| config.split_punctuation.contains(c))
            {
                Some(j) => i + j + 1,
                None => i + max,
            }
        };
        let piece: String = chars[i..cut_end].iter().collect();
        let piece = piece.trim_end().to_string();
        if !piece.is_empty() {
            pieces.push(piece);
        }
        i = skip_whitespace(&chars, cut_end);
    }
    pieces
}

fn skip_whitespace(chars: &[char], mut i: usize) -> usize {
    while i < chars.len() && chars[i].is_whitespace() {
        i += 1;
    }
    i
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn cfg(max: usize, punct: &[char]) -> CorpusConfig {
        CorpusConfig {
            max_chunk_size: max,
            split_punctuation: punct.to_vec(),
        }
    }

    fn doc(body: &str) -> Document {
        Document::new("d1", "Title", body).unwrap()
    }

    #[test]
    fn ingest_preserves_order() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"doc_id":"a","title":"A","body":"first body"}}"#).unwrap();
        writeln!(f, r#"{{"doc_id":"b","title":"B","body":"second body"}}"#).unwrap();
        writeln!(
            f,
            r#"{{"doc_id":"c","title":"C","body":"third body","source_tag":"wiki"}}"#
        )
        .unwrap();
        let docs = ingest_corpus(f.path(), &CorpusConfig::default()).unwrap();
        assert_eq!(docs.len(), 3);
        assert_eq!(docs[0].doc_id, DocId::new("a"));
        assert_eq!(docs[1].doc_id, DocId::new("b"));
        assert_eq!(docs[2].doc_id, DocId::new("c"));
        assert_eq!(docs[2].source_tag.as_deref(), Some("wiki"));
    }

    #[test]
    fn ingest_rejects_duplicate_doc_id_with_line_number() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"doc_id":"a","title":"A","body":"x"}}"#).unwrap();
        writeln!(f, r#"{{"doc_id":"a","title":"A2","body":"y"}}"#).unwrap();
        let err = ingest_corpus(f.path(), &CorpusConfig::default()).unwrap_err();
        match err {
            CorpusError::DuplicateDocId { line, doc_id, .. } => {
                assert_eq!(line, 2);
                assert_eq!(doc_id, DocId::new("a"));
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn ingest_reports_malformed_line() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"doc_id":"a","title":"A","body":"x"}}"#).unwrap();
        writeln!(f, r#"{{"doc_id":"b""#).unwrap();
        let err = ingest_corpus(f.path(), &CorpusConfig::default()).unwrap_err();
        match err {
            CorpusError::MalformedRecord { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn ingest_empty_file_is_empty_corpus() {
        let f = tempfile::NamedTempFile::new().unwrap();
        let docs = ingest_corpus(f.path(), &CorpusConfig::default()).unwrap();
        assert!(docs.is_empty());
    }

    #[test]
    fn ingest_missing_file_is_io_error() {
        let err = ingest_corpus(Path::new("/nonexistent/corpus.jsonl"), &CorpusConfig::default())
            .unwrap_err();
        assert!(matches!(err, CorpusError::Io { .. }));
    }

    #[test]
    fn short_body_is_single_chunk() {
        let chunks = chunk_document(&doc("ten chars."), &cfg(100, &['.'])).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].text, "ten chars.");
        assert_eq!(chunks[0].position, 0);
    }

    #[test]
    fn splits_at_latest_boundary() {
        // Window of 6 chars: latest '.' inside each window ends the chunk.
        let chunks = chunk_document(&doc("aaa. bbb. ccc."), &cfg(6, &['.'])).unwrap();
        let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(texts, vec!["aaa.", "bbb.", "ccc."]);
        let positions: Vec<usize> = chunks.iter().map(|c| c.position).collect();
        assert_eq!(positions, vec![0, 1, 2]);
    }

    #[test]
    fn hard_cut_when_no_boundary() {
        let chunks = chunk_document(&doc("aaaaaaa"), &cfg(3, &['.'])).unwrap();
        let lens: Vec<usize> = chunks.iter().map(|c| c.text.chars().count()).collect();
        assert_eq!(lens, vec![3, 3, 1]);
    }

    #[test]
    fn chunk_ids_sort_in_document_order() {
        let body = "a. ".repeat(30);
        let chunks = chunk_document(&doc(&body), &cfg(4, &['.'])).unwrap();
        let mut ids: Vec<ChunkId> = chunks.iter().map(|c| c.chunk_id.clone()).collect();
        let sorted = {
            let mut s = ids.clone();
            s.sort();
            s
        };
        assert_eq!(ids, sorted);
        ids.dedup();
        assert_eq!(ids.len(), chunks.len());
    }

    #[test]
    fn multibyte_text_counts_characters_not_bytes() {
        let body = "äöü".repeat(10); // 30 chars, 60 bytes
        let chunks = chunk_document(&doc(&body), &cfg(7, &['.'])).unwrap();
        for c in &chunks {
            assert!(c.text.chars().count() <= 7);
        }
        let joined: String = chunks.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(joined, body);
    }

    /// Walk the body, skipping whitespace between chunks, and require each
    /// chunk to appear verbatim in order.
    fn assert_round_trip(body: &str, chunks: &[Chunk]) {
        let body_chars: Vec<char> = body.chars().collect();
        let mut pos = 0;
        for chunk in chunks {
            while pos < body_chars.len() && body_chars[pos].is_whitespace() {
                pos += 1;
            }
            for ch in chunk.text.chars() {
                assert_eq!(body_chars.get(pos), Some(&ch), "chunk diverges from body");
                pos += 1;
            }
        }
        assert!(
            body_chars[pos..].iter().all(|c| c.is_whitespace()),
            "unchunked tail left over"
        );
    }

    proptest! {
        #[test]
        fn round_trip_and_bounds(
            body in "[a-z .!?\n]{1,400}",
            max in 1usize..64,
        ) {
            let config = cfg(max, &['.', '!', '?', '\n']);
            if body.trim().is_empty() {
                return Ok(());
            }
            let document = doc(&body);
            let chunks = chunk_document(&document, &config).unwrap();
            for (i, c) in chunks.iter().enumerate() {
                prop_assert_eq!(c.position, i);
                prop_assert!(!c.text.is_empty());
                prop_assert!(c.text.chars().count() <= max);
            }
            assert_round_trip(&body, &chunks);

            // Determinism: identical inputs, identical output.
            let again = chunk_document(&document, &config).unwrap();
            prop_assert_eq!(chunks, again);
        }
    }
}
