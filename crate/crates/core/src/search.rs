//! Query-time graph search with an LLM-decided stopping point.
//!
//! A session starts with the top-level nodes in context. After each append
//! the provider is asked whether the question can be answered; until enough
//! confident Yes decisions accumulate, the unvisited node with the highest
//! fused score `z + sim` is appended next, where `z = Eᵀr` propagates the
//! query relevance of visited nodes down their out-edges.

use crate::attention::{AttentionError, QueryRelevance};
use crate::eval::flops_estimate;
use crate::graph::{Hwdag, NodeId};
use crate::providers::embed::cosine;
use crate::providers::{
    templates, AnswerRequest, DecideRequest, EmbedRequest, NodeText, Provider, ProviderError, SessionRequest,
};
use crate::tokenizer::{SimpleTokenizer, Tokenizer};
use serde::{Deserialize, Serialize};

pub const DEFAULT_MODEL_PARAMS: f64 = 8.03e9;

/// Named `t_p` presets for the benchmark datasets.
pub const PRESETS: [(&str, f64); 4] = [
    ("narrativeqa", 0.5),
    ("qasper", 0.98),
    ("hotpotqa", 0.5),
    ("musique", 0.55),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Stop patience: confident Yes decisions needed to stop.
    pub t_n: usize,
    /// Confidence threshold on the renormalized Yes probability.
    pub t_p: f64,
    /// Cap on post-seed retrievals; `None` means the graph's node count.
    pub max_retrievals: Option<usize>,
    pub attention_retrieval: bool,
    pub dynamic_control: bool,
    pub embedding_similarity: bool,
    /// Recorded for reporting; the graph shape is fixed at build time.
    pub ip_graph: bool,
    /// Retrievals performed when `dynamic_control` is off.
    pub fixed_budget: usize,
    /// Multiplier on the similarity term of the fused score.
    pub fusion_weight: f64,
    /// Provider context window in tokens, used to trim an oversized seed.
    pub window_tokens: Option<usize>,
    pub model_params: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            t_n: 1,
            t_p: 0.5,
            max_retrievals: None,
            attention_retrieval: true,
            dynamic_control: true,
            embedding_similarity: true,
            ip_graph: true,
            fixed_budget: 5,
            fusion_weight: 1.0,
            window_tokens: None,
            model_params: DEFAULT_MODEL_PARAMS,
        }
    }
}

impl SearchConfig {
    pub fn preset(name: &str) -> Option<Self> {
        PRESETS
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|&(_, t_p)| Self { t_p, ..Self::default() })
    }

    pub fn check(&self) -> Result<(), SearchError> {
        let bad = |m: String| Err(SearchError::Config(m));
        if self.t_n == 0 {
            return bad("t_n must be at least 1".into());
        }
        if !(self.t_p > 0.0 && self.t_p < 1.0) {
            return bad(format!("t_p = {} must lie strictly between 0 and 1", self.t_p));
        }
        if !self.fusion_weight.is_finite() || self.fusion_weight < 0.0 {
            return bad(format!("fusion_weight = {} must be finite and non-negative", self.fusion_weight));
        }
        if !self.model_params.is_finite() || self.model_params <= 0.0 {
            return bad(format!("model_params = {} must be positive", self.model_params));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SearchError {
    #[error("invalid search config: {0}")]
    Config(String),
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("provider lacks decision probabilities")]
    MissingProbabilities,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Attention(#[from] AttentionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub p_yes: f64,
    pub p_no: f64,
    /// `p_yes > t_p`.
    pub yes: bool,
    /// Size of the visited set when the decision was read.
    pub visited: usize,
}

/// Two-way renormalization of the raw Yes/No probabilities.
pub fn decide(p_yes_raw: Option<f64>, p_no_raw: Option<f64>, t_p: f64, visited: usize) -> Result<DecisionRecord, SearchError> {
    let (Some(y), Some(n)) = (p_yes_raw, p_no_raw) else {
        return Err(SearchError::MissingProbabilities);
    };
    let p_yes = if y + n > 0.0 {
        y / (y + n)
    } else {
        log::warn!("provider gave zero mass to both Yes and No; treating as 0.5");
        0.5
    };
    Ok(DecisionRecord {
        p_yes,
        p_no: 1.0 - p_yes,
        yes: p_yes > t_p,
        visited,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LedgerKind {
    Prompt,
    Query,
    Node,
    Generation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    /// 0 for session setup, then one step per provider call.
    pub step: usize,
    pub kind: LedgerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<NodeId>,
    pub tokens: u64,
}

/// New tokens processed per step, by category.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenLedger {
    pub entries: Vec<LedgerEntry>,
}

impl TokenLedger {
    fn push(&mut self, step: usize, kind: LedgerKind, node: Option<NodeId>, tokens: u64) {
        self.entries.push(LedgerEntry { step, kind, node, tokens });
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|e| e.tokens).sum()
    }

    pub fn by_kind(&self, kind: LedgerKind) -> u64 {
        self.entries.iter().filter(|e| e.kind == kind).map(|e| e.tokens).sum()
    }

    /// Tokens per step, in step order.
    pub fn per_step(&self) -> Vec<u64> {
        let steps = self.entries.iter().map(|e| e.step + 1).max().unwrap_or(0);
        let mut out = vec![0; steps];
        for e in &self.entries {
            out[e.step] += e.tokens;
        }
        out
    }

    /// Checks that node entries list exactly `visited`, in order and once
    /// each, and that only node entries name a node.
    pub fn audit(&self, visited: &[NodeId]) -> Result<(), String> {
        let mut nodes = Vec::new();
        for e in &self.entries {
            match (e.kind, e.node) {
                (LedgerKind::Node, Some(id)) => nodes.push(id),
                (LedgerKind::Node, None) => return Err(format!("step {}: node entry without a node id", e.step)),
                (kind, Some(id)) => return Err(format!("step {}: {kind:?} entry names node {id}", e.step)),
                _ => {}
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = nodes.iter().find(|id| !seen.insert(**id)) {
            return Err(format!("node {dup} counted more than once"));
        }
        if nodes != visited {
            return Err(format!("ledger nodes {nodes:?} differ from visited {visited:?}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// `t_n` confident Yes decisions were reached.
    Confident,
    /// Fixed-budget mode retrieved its quota.
    FixedBudget,
    MaxRetrievals,
    /// Every node is already visited.
    GraphExhausted,
}

/// Mutable state of one search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSession {
    pub query: String,
    /// Ordered, append-only visited set S.
    pub visited: Vec<NodeId>,
    pub relevance: Vec<QueryRelevance>,
    pub decisions: Vec<DecisionRecord>,
    pub yes_count: usize,
    pub ledger: TokenLedger,
    pub session_id: String,
    in_s: Vec<bool>,
    step: usize,
    reported: u64,
}

impl SearchSession {
    pub fn is_visited(&self, id: NodeId) -> bool {
        self.in_s[id.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub query: String,
    pub answer: String,
    pub visited: Vec<NodeId>,
    /// Number of leading `visited` entries that came from the top level.
    pub seeded: usize,
    pub retrievals: usize,
    pub decisions: Vec<DecisionRecord>,
    pub relevance: Vec<QueryRelevance>,
    pub stop_reason: StopReason,
    /// Search ended without reaching `t_n` confident decisions or the fixed budget.
    pub exhausted: bool,
    pub ledger: TokenLedger,
    /// Sum of the provider-reported new tokens.
    pub tokens_processed: u64,
    /// TFLOPs under the `2 * params * tokens` approximation.
    pub flops_estimate: f64,
}

/// `z = Eᵀr` over the visited relevance, computed from out-edges.
pub fn retrieval_scores(graph: &Hwdag, relevance: &[QueryRelevance]) -> Vec<f64> {
    let mut z = vec![0.0; graph.len()];
    for q in relevance {
        for e in graph.out_edges(q.node_id) {
            z[e.dst.index()] += q.r * e.weight;
        }
    }
    for q in relevance {
        z[q.node_id.index()] = 0.0;
    }
    z
}

/// Per-candidate form: `z_i = Σ_{j ∈ Q_i} r_j e_{j,i}` over visited predecessors.
pub fn retrieval_scores_loop(graph: &Hwdag, relevance: &[QueryRelevance]) -> Vec<f64> {
    let mut r = vec![None; graph.len()];
    for q in relevance {
        r[q.node_id.index()] = Some(q.r);
    }
    (0..graph.len())
        .map(|i| {
            if r[i].is_some() {
                return 0.0;
            }
            graph
                .in_edges(NodeId(i as u32))
                .filter_map(|e| r[e.src.index()].map(|rj| rj * e.weight))
                .sum()
        })
        .collect()
}

/// Highest `z + w * sim` among unvisited nodes, ties to the lowest id.
pub fn select_next(
    visited: &[bool],
    z: &[f64],
    sim: Option<&[f64]>,
    cfg: &SearchConfig,
) -> Option<NodeId> {
    let mut best: Option<(usize, f64)> = None;
    for i in 0..visited.len() {
        if visited[i] {
            continue;
        }
        let mut f = if cfg.attention_retrieval { z[i] } else { 0.0 };
        if cfg.embedding_similarity {
            if let Some(sim) = sim {
                f += cfg.fusion_weight * sim[i];
            }
        }
        if best.is_none_or(|(_, b)| f > b) {
            best = Some((i, f));
        }
    }
    best.map(|(i, _)| NodeId(i as u32))
}

const EMBED_BATCH: usize = 64;

/// Unit embeddings of every node's text, in id order.
pub fn embed_nodes(graph: &Hwdag, provider: &dyn Provider) -> Result<Vec<Vec<f64>>, ProviderError> {
    let texts: Vec<String> = graph.nodes().iter().map(|n| n.text.clone()).collect();
    let mut out = Vec::with_capacity(texts.len());
    for chunk in texts.chunks(EMBED_BATCH) {
        let resp = provider.embed(&EmbedRequest { texts: chunk.to_vec() })?;
        resp.check(chunk.len()).map_err(ProviderError::SchemaViolation)?;
        out.extend(resp.vectors);
    }
    Ok(out)
}

struct Runner<'a> {
    graph: &'a Hwdag,
    provider: &'a dyn Provider,
    cfg: &'a SearchConfig,
    session: SearchSession,
}

impl Runner<'_> {
    fn next_step(&mut self) -> usize {
        self.session.step += 1;
        self.session.step
    }

    fn append(&mut self, ids: &[NodeId], want_decision: bool) -> Result<(), SearchError> {
        let req = DecideRequest {
            session_id: self.session.session_id.clone(),
            append_nodes: ids
                .iter()
                .map(|&id| NodeText::new(id, self.graph.node(id).text.clone()))
                .collect(),
            want_decision,
        };
        let resp = self.provider.decide(&req)?;
        resp.check(&req).map_err(ProviderError::SchemaViolation)?;

        let step = self.next_step();
        let s = &mut self.session;
        match &resp.tokens {
            Some(t) => {
                s.ledger.push(step, LedgerKind::Prompt, None, t.scaffold);
                for (&id, &n) in ids.iter().zip(&t.appended) {
                    s.ledger.push(step, LedgerKind::Node, Some(id), n);
                }
                s.ledger.push(step, LedgerKind::Generation, None, t.generated);
                s.reported += t.scaffold + t.appended.iter().sum::<u64>() + t.generated;
            }
            None => {
                for &id in ids {
                    let n = u64::from(self.graph.node(id).token_count);
                    s.ledger.push(step, LedgerKind::Node, Some(id), n);
                    s.reported += n;
                }
                let generated = u64::from(want_decision);
                s.ledger.push(step, LedgerKind::Generation, None, generated);
                s.reported += generated;
            }
        }

        for (&id, &r_raw) in ids.iter().zip(&resp.node_query_attention) {
            let position = s.visited.len() + 2;
            s.relevance.push(QueryRelevance::new(id, r_raw, position)?);
            s.visited.push(id);
            s.in_s[id.index()] = true;
        }

        if want_decision {
            let d = decide(resp.p_yes_raw, resp.p_no_raw, self.cfg.t_p, s.visited.len())?;
            if d.yes {
                s.yes_count += 1;
            }
            s.decisions.push(d);
        }
        Ok(())
    }

    fn run(&mut self, seed: &[NodeId], sim: Option<&[f64]>) -> Result<(StopReason, String), SearchError> {
        let dynamic = self.cfg.dynamic_control;
        let cap = self.cfg.max_retrievals.unwrap_or(self.graph.len());
        self.append(seed, dynamic)?;
        let mut retrievals = 0;
        let reason = loop {
            if dynamic && self.session.yes_count >= self.cfg.t_n {
                break StopReason::Confident;
            }
            if !dynamic && retrievals >= self.cfg.fixed_budget {
                break StopReason::FixedBudget;
            }
            if retrievals >= cap {
                break StopReason::MaxRetrievals;
            }
            let z = if self.cfg.attention_retrieval {
                retrieval_scores(self.graph, &self.session.relevance)
            } else {
                vec![0.0; self.graph.len()]
            };
            let Some(next) = select_next(&self.session.in_s, &z, sim, self.cfg) else {
                break StopReason::GraphExhausted;
            };
            self.append(&[next], dynamic)?;
            retrievals += 1;
        };

        let resp = self.provider.answer(&AnswerRequest {
            session_id: self.session.session_id.clone(),
        })?;
        let step = self.next_step();
        let (prompt, generated) = match resp.tokens {
            Some(t) => (t.prompt, t.generated),
            None => (
                templates::answer_scaffold_tokens(&SimpleTokenizer) as u64,
                SimpleTokenizer.count(&resp.text) as u64,
            ),
        };
        let s = &mut self.session;
        s.ledger.push(step, LedgerKind::Prompt, None, prompt);
        s.ledger.push(step, LedgerKind::Generation, None, generated);
        s.reported += prompt + generated;
        Ok((reason, resp.text))
    }
}

/// Top-level seed, trimmed to the provider window by similarity if needed.
fn seed_nodes(graph: &Hwdag, cfg: &SearchConfig, sim: Option<&[f64]>) -> Vec<NodeId> {
    let top = graph.top_level().to_vec();
    let Some(window) = cfg.window_tokens else {
        return top;
    };
    let total: usize = top.iter().map(|&id| graph.node(id).token_count as usize).sum();
    if total <= window {
        return top;
    }
    let mut ranked = top.clone();
    if let Some(sim) = sim {
        ranked.sort_by(|a, b| sim[b.index()].total_cmp(&sim[a.index()]).then(a.cmp(b)));
    }
    let mut seed = Vec::new();
    let mut used = 0;
    for id in ranked {
        let n = graph.node(id).token_count as usize;
        if seed.is_empty() || used + n <= window {
            seed.push(id);
            used += n;
        }
    }
    log::warn!(
        "top level holds {total} tokens, above the {window}-token window; seeding with {} of {} nodes",
        seed.len(),
        top.len()
    );
    seed.sort();
    seed
}

pub fn run_search(graph: &Hwdag, query: &str, provider: &dyn Provider, cfg: &SearchConfig) -> Result<SearchResult, SearchError> {
    run_search_with(graph, query, provider, cfg, None)
}

/// [`run_search`] with optional precomputed node embeddings.
pub fn run_search_with(
    graph: &Hwdag,
    query: &str,
    provider: &dyn Provider,
    cfg: &SearchConfig,
    node_vectors: Option<&[Vec<f64>]>,
) -> Result<SearchResult, SearchError> {
    cfg.check()?;
    if graph.is_empty() {
        return Err(SearchError::EmptyGraph);
    }

    let needs_sim = cfg.embedding_similarity || cfg.window_tokens.is_some();
    let sim = if needs_sim {
        let owned;
        let vectors = match node_vectors {
            Some(v) => v,
            None => {
                owned = embed_nodes(graph, provider)?;
                &owned
            }
        };
        let q = provider.embed(&EmbedRequest {
            texts: vec![query.to_string()],
        })?;
        q.check(1).map_err(ProviderError::SchemaViolation)?;
        Some(vectors.iter().map(|v| cosine(&q.vectors[0], v)).collect::<Vec<f64>>())
    } else {
        None
    };

    let created = provider.create_session(&SessionRequest {
        query: query.to_string(),
        template_id: templates::DECIDE.id.to_string(),
    })?;
    let mut session = SearchSession {
        query: query.to_string(),
        visited: Vec::new(),
        relevance: Vec::new(),
        decisions: Vec::new(),
        yes_count: 0,
        ledger: TokenLedger::default(),
        session_id: created.session_id,
        in_s: vec![false; graph.len()],
        step: 0,
        reported: 0,
    };
    let (prompt, query_tokens) = match created.tokens {
        Some(t) => (t.prompt, t.query),
        None => (
            templates::decide_scaffold_tokens(&SimpleTokenizer) as u64,
            SimpleTokenizer.count(query) as u64,
        ),
    };
    session.ledger.push(0, LedgerKind::Prompt, None, prompt);
    session.ledger.push(0, LedgerKind::Query, None, query_tokens);
    session.reported = prompt + query_tokens;

    let seed = seed_nodes(graph, cfg, sim.as_deref());
    let mut runner = Runner {
        graph,
        provider,
        cfg,
        session,
    };
    let outcome = runner.run(&seed, sim.as_deref().filter(|_| cfg.embedding_similarity));
    let closed = provider.close_session(&runner.session.session_id);
    let (stop_reason, answer) = outcome?;
    if let Err(e) = closed {
        log::warn!("closing session {}: {e}", runner.session.session_id);
    }

    let s = runner.session;
    let tokens_processed = s.reported;
    let exhausted = matches!(stop_reason, StopReason::MaxRetrievals | StopReason::GraphExhausted);
    if exhausted {
        log::info!("search for {query:?} ended by budget/graph exhaustion");
    }
    Ok(SearchResult {
        query: s.query,
        answer,
        retrievals: s.visited.len() - seed.len(),
        seeded: seed.len(),
        visited: s.visited,
        decisions: s.decisions,
        relevance: s.relevance,
        stop_reason,
        exhausted,
        flops_estimate: flops_estimate(&s.ledger.per_step(), cfg.model_params),
        ledger: s.ledger,
        tokens_processed,
    })
}
