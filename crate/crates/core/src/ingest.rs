//! Document loading, fixed-size chunking and summarization batching.

use crate::graph::{BuildConfig, IpNode, NodeId, NodeSource};
use crate::tokenizer::Tokenizer;
use serde::{Deserialize, Serialize};
use std::io::BufRead;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("empty input")]
    EmptyInput,
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            text: text.into(),
        }
    }

    pub fn is_blank(&self) -> bool {
        self.text.trim().is_empty()
    }
}

/// Reads a plain-text file as one document whose id is the file stem.
pub fn load_text(path: impl AsRef<Path>) -> Result<Document, IngestError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let doc_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "document".to_string());
    Ok(Document { doc_id, text })
}

/// Reads a JSONL corpus with one `{doc_id, text}` object per line.
pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<Document>, IngestError> {
    read_jsonl(path)
}

pub(crate) fn read_jsonl<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, IngestError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
        path: shown.clone(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| IngestError::Io {
            path: shown.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| IngestError::Parse {
            path: shown.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

/// Splits a document into level-1 chunk nodes of `chunk_size_tokens` tokens
/// each (the last may be shorter). Chunk text is the source slice spanning
/// the chunk's tokens, so boundaries never split a token.
pub fn chunk_document(doc: &Document, cfg: &BuildConfig, tokenizer: &dyn Tokenizer) -> Result<Vec<IpNode>, IngestError> {
    let tokens = tokenizer.tokenize(&doc.text);
    if doc.is_blank() || tokens.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    let size = cfg.chunk_size_tokens.max(1);
    Ok(tokens
        .chunks(size)
        .enumerate()
        .map(|(i, chunk)| {
            let start = chunk[0].start;
            let end = chunk[chunk.len() - 1].end;
            IpNode {
                id: NodeId(i as u32),
                level: 1,
                text: doc.text[start..end].to_string(),
                token_count: chunk.len() as u32,
                source: NodeSource::Chunk,
            }
        })
        .collect())
}

/// A contiguous run of nodes summarized in one provider call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Batch<'a> {
    pub nodes: &'a [IpNode],
    /// Single node whose own length exceeds the threshold.
    pub oversized: bool,
}

impl Batch<'_> {
    pub fn token_count(&self) -> usize {
        self.nodes.iter().map(|n| n.token_count as usize).sum()
    }
}

/// Greedy batching: a batch is closed before adding a node that would push
/// its total past `s`. A node longer than `s` on its own becomes a flagged
/// single-node batch.
pub fn batch_nodes(nodes: &[IpNode], s: usize) -> Vec<Batch<'_>> {
    let mut batches = Vec::new();
    let mut start = 0;
    let mut total = 0usize;
    for (i, node) in nodes.iter().enumerate() {
        let len = node.token_count as usize;
        if i > start && total + len > s {
            batches.push(Batch {
                nodes: &nodes[start..i],
                oversized: false,
            });
            start = i;
            total = 0;
        }
        total += len;
    }
    if start < nodes.len() {
        batches.push(Batch {
            nodes: &nodes[start..],
            oversized: false,
        });
    }
    for batch in &mut batches {
        if batch.token_count() > s {
            batch.oversized = true;
            log::warn!(
                "node {} has {} tokens, above the batch threshold {s}; summarizing it alone",
                batch.nodes[0].id,
                batch.nodes[0].token_count
            );
        }
    }
    batches
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::SimpleTokenizer;
    use proptest::prelude::*;

    fn words(n: usize) -> String {
        (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    fn sized(counts: &[u32]) -> Vec<IpNode> {
        counts
            .iter()
            .enumerate()
            .map(|(i, &c)| IpNode {
                id: NodeId(i as u32),
                level: 1,
                text: String::new(),
                token_count: c,
                source: NodeSource::Chunk,
            })
            .collect()
    }

    fn shape(batches: &[Batch<'_>]) -> Vec<Vec<u32>> {
        batches
            .iter()
            .map(|b| b.nodes.iter().map(|n| n.id.0).collect())
            .collect()
    }

    #[test]
    fn chunks_650_tokens_into_300_300_50() {
        let doc = Document::new("d", words(650));
        let chunks = chunk_document(&doc, &BuildConfig::default(), &SimpleTokenizer).unwrap();
        let counts: Vec<u32> = chunks.iter().map(|c| c.token_count).collect();
        assert_eq!(counts, vec![300, 300, 50]);
        for c in &chunks {
            assert_eq!(SimpleTokenizer.count(&c.text), c.token_count as usize);
            assert_eq!(c.level, 1);
        }
        assert!(chunks[1].text.starts_with("w300 "));
    }

    #[test]
    fn exact_chunk_yields_one_node() {
        let doc = Document::new("d", words(300));
        let chunks = chunk_document(&doc, &BuildConfig::default(), &SimpleTokenizer).unwrap();
        assert_eq!(chunks.len(), 1);
    }

    #[test]
    fn empty_document_is_rejected() {
        for text in ["", "   \n\t "] {
            let err = chunk_document(&Document::new("d", text), &BuildConfig::default(), &SimpleTokenizer).unwrap_err();
            assert_eq!(err.to_string(), "empty input");
        }
    }

    #[test]
    fn batches_close_before_exceeding() {
        let nodes = sized(&[3000, 3000, 3000, 3000]);
        assert_eq!(shape(&batch_nodes(&nodes, 8000)), vec![vec![0, 1], vec![2, 3]]);
        let nodes = sized(&[100, 200]);
        assert_eq!(shape(&batch_nodes(&nodes, 8000)), vec![vec![0, 1]]);
        let nodes = sized(&[4000, 4000]);
        assert_eq!(shape(&batch_nodes(&nodes, 8000)), vec![vec![0, 1]]);
    }

    #[test]
    fn oversized_node_gets_own_flagged_batch() {
        let nodes = sized(&[9000]);
        let batches = batch_nodes(&nodes, 8000);
        assert_eq!(batches.len(), 1);
        assert!(batches[0].oversized);

        let nodes = sized(&[100, 9000, 100]);
        let batches = batch_nodes(&nodes, 8000);
        assert_eq!(shape(&batches), vec![vec![0], vec![1], vec![2]]);
        assert_eq!(batches.iter().map(|b| b.oversized).collect::<Vec<_>>(), vec![false, true, false]);
    }

    #[test]
    fn reads_jsonl_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(&path, "{\"doc_id\":\"a\",\"text\":\"x\"}\n\n{\"doc_id\":\"b\",\"text\":\"y\"}\n").unwrap();
        let docs = load_jsonl(&path).unwrap();
        assert_eq!(docs, vec![Document::new("a", "x"), Document::new("b", "y")]);
        std::fs::write(&path, "{\"doc_id\":\"a\"}\n").unwrap();
        assert!(matches!(load_jsonl(&path), Err(IngestError::Parse { line: 1, .. })));
    }

    proptest! {
        #[test]
        fn chunk_counts_sum_to_document(n in 1usize..2000, size in 1usize..400) {
            let doc = Document::new("d", words(n));
            let cfg = BuildConfig { chunk_size_tokens: size, batch_threshold_s: size.max(8000), ..Default::default() };
            let chunks = chunk_document(&doc, &cfg, &SimpleTokenizer).unwrap();
            let total: u32 = chunks.iter().map(|c| c.token_count).sum();
            prop_assert_eq!(total as usize, SimpleTokenizer.count(&doc.text));
            for c in &chunks[..chunks.len() - 1] {
                prop_assert_eq!(c.token_count as usize, size);
            }
        }

        #[test]
        fn batching_is_an_ordered_partition(counts in proptest::collection::vec(1u32..5000, 1..40), s in 1usize..10000) {
            let nodes = sized(&counts);
            let batches = batch_nodes(&nodes, s);
            let flat: Vec<u32> = batches.iter().flat_map(|b| b.nodes.iter().map(|n| n.id.0)).collect();
            prop_assert_eq!(flat, (0..counts.len() as u32).collect::<Vec<_>>());
            for b in &batches {
                prop_assert!(!b.nodes.is_empty());
                prop_assert!(b.token_count() <= s || b.nodes.len() == 1);
                prop_assert_eq!(b.oversized, b.token_count() > s);
            }
        }
    }
}
