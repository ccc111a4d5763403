//! Level-by-level graph construction.
//!
//! Each level is batched, every batch is summarized by the provider into
//! bullet-point Information Points, and the provider's token-to-node attention
//! is reduced into normalized edges from each new node to its batch's sources.
//! Calls within a level run concurrently; node ids and edges are assigned in
//! batch order so builds are reproducible.

use crate::attention::{aggregate_edges, AttentionError, IpSpan, TokenNodeAttention};
use crate::graph::{BuildConfig, ConfigError, Edge, GraphMeta, Hwdag, IpNode, NodeId, NodeSource};
use crate::ingest::{batch_nodes, chunk_document, Batch, Document, IngestError};
use crate::providers::{templates, CallTokens, NodeText, ProviderError, SummarizeRequest, SummarizeResponse, Summarizer};
use crate::tokenizer::Tokenizer;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Bullet Information Points recovered from a generation.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedIps {
    pub spans: Vec<IpSpan>,
    pub texts: Vec<String>,
    /// No bullet markers were found; the whole generation is one IP.
    pub unstructured: bool,
}

/// Text of a token that starts a line, with leading horizontal whitespace
/// removed. `None` when the token does not start a line.
fn line_start(prev_ends_line: bool, tok: &str) -> Option<&str> {
    if prev_ends_line {
        return Some(tok.trim_start_matches([' ', '\t', '\r']));
    }
    tok.rfind('\n').map(|i| tok[i + 1..].trim_start_matches([' ', '\t', '\r']))
}

/// Splits generated tokens into bullet IPs. A span starts at a token that
/// begins a line with `*` and runs to the next such token or the end. Marker
/// characters and any preamble before the first bullet are left out of the
/// IP text; preamble tokens belong to no span.
pub fn parse_ips(tokens: &[String]) -> ParsedIps {
    let mut starts = Vec::new();
    let mut prev_ends_line = true;
    for (i, tok) in tokens.iter().enumerate() {
        if let Some(head) = line_start(prev_ends_line, tok) {
            if head.starts_with('*') {
                starts.push(i);
            }
        }
        if !tok.is_empty() {
            prev_ends_line = tok.ends_with('\n');
        }
    }

    if starts.is_empty() {
        let text = tokens.concat().trim().to_string();
        if text.is_empty() || tokens.is_empty() {
            return ParsedIps {
                spans: vec![],
                texts: vec![],
                unstructured: true,
            };
        }
        return ParsedIps {
            spans: vec![IpSpan::new(0, 0..tokens.len())],
            texts: vec![text],
            unstructured: true,
        };
    }

    let mut spans = Vec::new();
    let mut texts = Vec::new();
    for (k, &start) in starts.iter().enumerate() {
        let end = starts.get(k + 1).copied().unwrap_or(tokens.len());
        let marker = &tokens[start];
        let prev_ends_line = start == 0 || tokens[..start].iter().rev().find(|t| !t.is_empty()).is_none_or(|t| t.ends_with('\n'));
        let head = line_start(prev_ends_line, marker).unwrap_or("");
        let mut text = head.strip_prefix('*').unwrap_or(head).to_string();
        for tok in &tokens[start + 1..end] {
            text.push_str(tok);
        }
        let text = text.trim().to_string();
        if text.is_empty() {
            continue;
        }
        spans.push(IpSpan::new(texts.len(), start..end));
        texts.push(text);
    }
    ParsedIps {
        spans,
        texts,
        unstructured: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchTrace {
    pub call_id: String,
    pub source_ids: Vec<NodeId>,
    pub oversized: bool,
    /// Raw provider response; absent when the call failed.
    pub response: Option<SummarizeResponse>,
    pub error: Option<String>,
    pub spans: Vec<IpSpan>,
    pub ip_texts: Vec<String>,
    pub unstructured: bool,
    pub empty_generation: bool,
    pub produced: Vec<NodeId>,
    pub degenerate: Vec<NodeId>,
    pub tokens: CallTokens,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelTrace {
    /// Level of the source nodes; produced nodes sit one level higher.
    pub source_level: u32,
    pub batches: Vec<BatchTrace>,
}

/// Record of every provider call made during a build.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BuildTrace {
    pub doc_id: String,
    pub provider: String,
    pub config: BuildConfig,
    pub levels: Vec<LevelTrace>,
}

impl BuildTrace {
    pub fn calls(&self) -> impl Iterator<Item = &BatchTrace> {
        self.levels.iter().flat_map(|l| l.batches.iter())
    }

    /// Prompt plus generated tokens over all calls.
    pub fn total_tokens(&self) -> u64 {
        self.calls().map(|b| b.tokens.prompt + b.tokens.generated).sum()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BuildErrorKind {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("provider failure: {0}")]
    Provider(#[from] ProviderError),
    #[error("malformed attention: {0}")]
    Attention(#[from] AttentionError),
}

/// Build failure; `trace` holds every call completed before the failure.
#[derive(Debug, thiserror::Error)]
#[error("graph build failed: {kind}")]
pub struct BuildError {
    pub kind: BuildErrorKind,
    pub trace: Box<BuildTrace>,
}

/// Nodes and edges produced from one level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelOutput {
    pub nodes: Vec<IpNode>,
    pub edges: Vec<Edge>,
    pub trace: LevelTrace,
    pub warnings: Vec<String>,
}

fn request_for(batch: &Batch<'_>) -> SummarizeRequest {
    SummarizeRequest {
        batch: batch.nodes.iter().map(|n| NodeText::new(n.id, n.text.clone())).collect(),
        template_id: templates::SUMMARIZE.id.to_string(),
    }
}

/// Summarizes one level. `next_id` is the first id to assign.
pub fn build_level(
    nodes: &[IpNode],
    next_id: u32,
    provider: &dyn Summarizer,
    cfg: &BuildConfig,
    tokenizer: &dyn Tokenizer,
) -> Result<LevelOutput, (BuildErrorKind, LevelTrace)> {
    let source_level = nodes.first().map_or(1, |n| n.level);
    let batches = batch_nodes(nodes, cfg.batch_threshold_s);
    let responses: Vec<Result<SummarizeResponse, ProviderError>> = batches
        .par_iter()
        .map(|b| provider.summarize(&request_for(b)))
        .collect();

    let mut out = LevelOutput {
        nodes: Vec::new(),
        edges: Vec::new(),
        trace: LevelTrace {
            source_level,
            batches: Vec::new(),
        },
        warnings: Vec::new(),
    };
    let mut next_id = next_id;

    for (index, (batch, response)) in batches.iter().zip(responses).enumerate() {
        let mut bt = BatchTrace {
            call_id: format!("L{source_level}-B{index}"),
            source_ids: batch.nodes.iter().map(|n| n.id).collect(),
            oversized: batch.oversized,
            response: None,
            error: None,
            spans: vec![],
            ip_texts: vec![],
            unstructured: false,
            empty_generation: false,
            produced: vec![],
            degenerate: vec![],
            tokens: CallTokens::default(),
        };
        if batch.oversized {
            out.warnings
                .push(format!("{}: node {} exceeds the batch threshold", bt.call_id, batch.nodes[0].id));
        }

        let resp = match response.and_then(|r| {
            r.check(batch.nodes.len())
                .map(|_| r)
                .map_err(ProviderError::SchemaViolation)
        }) {
            Ok(r) => r,
            Err(e) => {
                bt.error = Some(e.to_string());
                out.trace.batches.push(bt);
                return Err((e.into(), out.trace));
            }
        };
        bt.tokens = resp.tokens.unwrap_or(CallTokens {
            prompt: 0,
            generated: resp.generated_tokens.len() as u64,
        });

        let mut parsed = parse_ips(&resp.generated_tokens);
        if parsed.spans.is_empty() {
            bt.empty_generation = true;
            out.warnings.push(format!("{}: empty generation, no nodes produced", bt.call_id));
            bt.response = Some(resp);
            out.trace.batches.push(bt);
            continue;
        }
        if !cfg.ip_graph && parsed.spans.len() > 1 {
            let start = parsed.spans[0].start;
            let end = parsed.spans[parsed.spans.len() - 1].end;
            parsed.spans = vec![IpSpan::new(0, start..end)];
            parsed.texts = vec![parsed.texts.join(" ")];
        }

        let edge_rows = TokenNodeAttention::from_rows(&resp.token_node_attention)
            .and_then(|attn| aggregate_edges(&attn, &parsed.spans));
        let edge_rows = match edge_rows {
            Ok(rows) => rows,
            Err(e) => {
                bt.error = Some(e.to_string());
                bt.response = Some(resp);
                out.trace.batches.push(bt);
                return Err((e.into(), out.trace));
            }
        };

        for ((text, row), degenerate) in parsed.texts.iter().zip(&edge_rows.rows).zip(&edge_rows.degenerate) {
            let id = NodeId(next_id);
            next_id += 1;
            out.nodes.push(IpNode {
                id,
                level: source_level + 1,
                text: text.clone(),
                token_count: tokenizer.count(text).max(1) as u32,
                source: NodeSource::Generated,
            });
            for (src, &w) in batch.nodes.iter().zip(row) {
                if w > 0.0 {
                    out.edges.push(Edge {
                        src: id,
                        dst: src.id,
                        weight: w,
                    });
                }
            }
            bt.produced.push(id);
            if *degenerate {
                bt.degenerate.push(id);
            }
        }
        bt.spans = parsed.spans;
        bt.ip_texts = parsed.texts;
        bt.unstructured = parsed.unstructured;
        bt.response = Some(resp);
        out.trace.batches.push(bt);
    }
    Ok(out)
}

fn level_tokens(nodes: &[IpNode]) -> usize {
    nodes.iter().map(|n| n.token_count as usize).sum()
}

/// Builds the full graph for `doc`.
///
/// Levels are added until the newest one fits a single batch (total tokens
/// at most `batch_threshold_s`) and at least `min_levels` exist. The build
/// also stops, with a warning, when a level yields no nodes or fails to
/// shrink while still above the threshold.
pub fn build_graph(
    doc: &Document,
    provider: &dyn Summarizer,
    cfg: &BuildConfig,
    tokenizer: &dyn Tokenizer,
) -> Result<(Hwdag, BuildTrace), BuildError> {
    let mut trace = BuildTrace {
        doc_id: doc.doc_id.clone(),
        provider: provider.identity(),
        config: cfg.clone(),
        levels: Vec::new(),
    };
    let fail = |kind: BuildErrorKind, trace: BuildTrace| BuildError {
        kind,
        trace: Box::new(trace),
    };

    if let Err(e) = cfg.check() {
        return Err(fail(e.into(), trace));
    }
    if cfg.tokenizer_id != tokenizer.id() {
        let e = ConfigError::TokenizerMismatch {
            configured: cfg.tokenizer_id.clone(),
            supplied: tokenizer.id().to_string(),
        };
        return Err(fail(e.into(), trace));
    }
    let chunks = match chunk_document(doc, cfg, tokenizer) {
        Ok(c) => c,
        Err(e) => return Err(fail(e.into(), trace)),
    };

    let s = cfg.batch_threshold_s;
    let mut nodes: Vec<IpNode> = Vec::new();
    let mut edges: Vec<Edge> = Vec::new();
    let mut warnings = Vec::new();
    let mut top = chunks;
    let mut num_levels = 1;

    loop {
        let top_tokens = level_tokens(&top);
        if num_levels >= cfg.min_levels && top_tokens <= s {
            break;
        }
        let next_id = (nodes.len() + top.len()) as u32;
        let out = match build_level(&top, next_id, provider, cfg, tokenizer) {
            Ok(out) => out,
            Err((kind, level_trace)) => {
                trace.levels.push(level_trace);
                return Err(fail(kind, trace));
            }
        };
        trace.levels.push(out.trace);
        warnings.extend(out.warnings);
        if out.nodes.is_empty() {
            warnings.push(format!("level {} produced no nodes; stopping", num_levels + 1));
            break;
        }
        let new_tokens = level_tokens(&out.nodes);
        nodes.append(&mut top);
        top = out.nodes;
        edges.extend(out.edges);
        num_levels += 1;
        if num_levels >= cfg.min_levels && new_tokens > s && new_tokens >= top_tokens {
            warnings.push(format!(
                "level {num_levels} did not shrink ({new_tokens} >= {top_tokens} tokens); stopping above the batch threshold"
            ));
            break;
        }
    }
    nodes.append(&mut top);

    for w in &warnings {
        log::warn!("{}: {w}", doc.doc_id);
    }
    let meta = GraphMeta {
        config_hash: cfg.hash(),
        provider: trace.provider.clone(),
        tokenizer_id: tokenizer.id().to_string(),
        degenerate_nodes: trace.calls().flat_map(|b| b.degenerate.iter().copied()).collect(),
        unstructured_nodes: trace
            .calls()
            .filter(|b| b.unstructured)
            .flat_map(|b| b.produced.iter().copied())
            .collect(),
        warnings,
    };
    let graph = Hwdag::from_parts(nodes, edges, meta).expect("builder assigns dense ids and in-graph edges");
    Ok((graph, trace))
}

/// Summarizer that answers from a recorded [`BuildTrace`].
pub struct ReplaySummarizer {
    identity: String,
    responses: HashMap<Vec<NodeId>, SummarizeResponse>,
}

impl ReplaySummarizer {
    pub fn from_trace(trace: &BuildTrace) -> Self {
        Self {
            identity: trace.provider.clone(),
            responses: trace
                .calls()
                .filter_map(|b| b.response.clone().map(|r| (b.source_ids.clone(), r)))
                .collect(),
        }
    }
}

impl Summarizer for ReplaySummarizer {
    fn identity(&self) -> String {
        self.identity.clone()
    }

    fn summarize(&self, req: &SummarizeRequest) -> Result<SummarizeResponse, ProviderError> {
        let key: Vec<NodeId> = req.batch.iter().map(|n| n.node_id).collect();
        self.responses
            .get(&key)
            .cloned()
            .ok_or_else(|| ProviderError::InvalidRequest(format!("no recorded response for batch {key:?}")))
    }
}
