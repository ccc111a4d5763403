//! Deterministic in-process provider for GPU-free builds and searches.
//!
//! Summaries emit one bullet per source node (its first sentence, capped at
//! 30 tokens). Attention is word-set Jaccard overlap, so edges point where
//! the text actually came from. Decisions come from a fixed script or from a
//! per-query seeded generator.

use super::embed::{fnv1a, HashedBowEmbedder};
use super::protocol::*;
use super::templates;
use super::{Embedder, ProviderError, SessionProvider, Summarizer};
use crate::tokenizer::{word_set, SimpleTokenizer, Tokenizer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

pub const IP_TOKEN_CAP: usize = 30;
const ANSWER_TOKEN_CAP: usize = 12;

/// Where the mock's Yes/No probabilities come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DecisionSource {
    /// Raw `(p_yes, p_no)` pairs, replayed from the start in every session.
    Script(Vec<(f64, f64)>),
    /// `p_yes = (u + coverage) / 2`, `p_no = 1 - p_yes`, where `u` is uniform
    /// from a generator seeded by `seed` and the query, and `coverage` is the
    /// fraction of query words present in the session context.
    Seeded { seed: u64 },
}

impl DecisionSource {
    /// Parses `yes,no,0.6:0.2,...`. `yes` is `(1, 0)` and `no` is `(0, 1)`.
    pub fn parse_script(spec: &str) -> Result<Self, String> {
        let mut out = Vec::new();
        for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let pair = match item.to_ascii_lowercase().as_str() {
                "yes" | "y" => (1.0, 0.0),
                "no" | "n" => (0.0, 1.0),
                other => {
                    let (y, n) = other
                        .split_once(':')
                        .ok_or_else(|| format!("script entry {item:?} is not yes, no or p_yes:p_no"))?;
                    let y: f64 = y.parse().map_err(|_| format!("bad p_yes in {item:?}"))?;
                    let n: f64 = n.parse().map_err(|_| format!("bad p_no in {item:?}"))?;
                    (y, n)
                }
            };
            out.push(pair);
        }
        if out.is_empty() {
            return Err("empty decision script".into());
        }
        Ok(DecisionSource::Script(out))
    }
}

struct MockSession {
    query_words: BTreeSet<String>,
    context: Vec<String>,
    context_words: BTreeSet<String>,
    script_pos: usize,
    rng: ChaCha8Rng,
}

pub struct MockProvider {
    decisions: DecisionSource,
    embedder: HashedBowEmbedder,
    sessions: Mutex<BTreeMap<String, MockSession>>,
    next_id: AtomicU64,
}

impl Default for MockProvider {
    fn default() -> Self {
        Self::new(DecisionSource::Seeded { seed: 0 })
    }
}

impl MockProvider {
    pub const IDENTITY: &'static str = "mock-v1";

    pub fn new(decisions: DecisionSource) -> Self {
        Self {
            decisions,
            embedder: HashedBowEmbedder::default(),
            sessions: Mutex::new(BTreeMap::new()),
            next_id: AtomicU64::new(0),
        }
    }

    pub fn scripted(script: Vec<(f64, f64)>) -> Self {
        Self::new(DecisionSource::Script(script))
    }

    pub fn seeded(seed: u64) -> Self {
        Self::new(DecisionSource::Seeded { seed })
    }

    pub fn open_sessions(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }
}

fn tokenizer() -> SimpleTokenizer {
    SimpleTokenizer
}

/// First sentence of `text`, cut at [`IP_TOKEN_CAP`] tokens.
fn first_sentence(text: &str) -> &str {
    let toks = tokenizer().tokenize(text);
    if toks.is_empty() {
        return "";
    }
    let mut last = 0;
    for (i, t) in toks.iter().enumerate().take(IP_TOKEN_CAP) {
        last = i;
        if matches!(t.surface(text), "." | "!" | "?") {
            break;
        }
    }
    &text[toks[0].start..toks[last].end]
}

/// Tokenizes `text` and glues the whitespace before each token onto it, so
/// the surfaces concatenate back to `text`.
fn surface_tokens(text: &str) -> Vec<String> {
    let toks = tokenizer().tokenize(text);
    let mut out = Vec::with_capacity(toks.len());
    let mut prev = 0;
    for t in &toks {
        out.push(text[prev..t.end].to_string());
        prev = t.end;
    }
    if let Some(last) = out.last_mut() {
        last.push_str(&text[prev..]);
    }
    out
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

impl Summarizer for MockProvider {
    fn identity(&self) -> String {
        Self::IDENTITY.to_string()
    }

    fn summarize(&self, req: &SummarizeRequest) -> Result<SummarizeResponse, ProviderError> {
        if req.batch.is_empty() {
            return Err(ProviderError::InvalidRequest("empty batch".into()));
        }
        if templates::by_id(&req.template_id) != Some(templates::SUMMARIZE) {
            return Err(ProviderError::InvalidRequest(format!("unknown template {}", req.template_id)));
        }
        let tk = tokenizer();
        let source_words: Vec<_> = req.batch.iter().map(|n| word_set(&tk, &n.text)).collect();

        let mut generated_tokens = Vec::new();
        let mut attention = Vec::new();
        let ips: Vec<&str> = req
            .batch
            .iter()
            .map(|n| first_sentence(&n.text))
            .filter(|s| !s.is_empty())
            .collect();
        for (i, ip) in ips.iter().enumerate() {
            let line = if i == 0 { format!("* {ip}") } else { format!("\n* {ip}") };
            let ip_words = word_set(&tk, ip);
            let row: Vec<f64> = source_words.iter().map(|w| jaccard(&ip_words, w)).collect();
            for tok in surface_tokens(&line) {
                generated_tokens.push(tok);
                attention.push(row.clone());
            }
        }
        let generated_text = generated_tokens.concat();
        let texts: Vec<&str> = req.batch.iter().map(|n| n.text.as_str()).collect();
        let prompt = templates::render_summarize(&texts);
        Ok(SummarizeResponse {
            tokens: Some(CallTokens {
                prompt: tk.count(&prompt) as u64,
                generated: generated_tokens.len() as u64,
            }),
            generated_text,
            generated_tokens,
            token_node_attention: attention,
        })
    }
}

impl SessionProvider for MockProvider {
    fn create_session(&self, req: &SessionRequest) -> Result<SessionResponse, ProviderError> {
        if templates::by_id(&req.template_id) != Some(templates::DECIDE) {
            return Err(ProviderError::InvalidRequest(format!("unknown template {}", req.template_id)));
        }
        let tk = tokenizer();
        let id = format!("mock-{}", self.next_id.fetch_add(1, Ordering::Relaxed));
        let seed = match self.decisions {
            DecisionSource::Seeded { seed } => seed,
            DecisionSource::Script(_) => 0,
        };
        let session = MockSession {
            query_words: word_set(&tk, &req.query),
            context: Vec::new(),
            context_words: BTreeSet::new(),
            script_pos: 0,
            rng: ChaCha8Rng::seed_from_u64(seed ^ fnv1a(req.query.as_bytes())),
        };
        self.sessions.lock().unwrap().insert(id.clone(), session);
        Ok(SessionResponse {
            session_id: id,
            tokens: Some(SessionTokens {
                prompt: templates::decide_scaffold_tokens(&tk) as u64,
                query: tk.count(&req.query) as u64,
            }),
        })
    }

    fn decide(&self, req: &DecideRequest) -> Result<DecideResponse, ProviderError> {
        let tk = tokenizer();
        let mut sessions = self.sessions.lock().unwrap();
        let session = sessions
            .get_mut(&req.session_id)
            .ok_or_else(|| ProviderError::UnknownSession(req.session_id.clone()))?;

        let mut attention = Vec::with_capacity(req.append_nodes.len());
        let mut appended = Vec::with_capacity(req.append_nodes.len());
        for node in &req.append_nodes {
            let words = word_set(&tk, &node.text);
            attention.push(jaccard(&words, &session.query_words));
            appended.push(tk.count(&node.text) as u64);
            session.context.push(node.text.clone());
            session.context_words.extend(words);
        }

        let (p_yes, p_no) = if req.want_decision {
            let pair = match &self.decisions {
                DecisionSource::Script(script) => {
                    let pair = *script.get(session.script_pos).ok_or(ProviderError::ScriptExhausted)?;
                    session.script_pos += 1;
                    pair
                }
                DecisionSource::Seeded { .. } => {
                    let u: f64 = session.rng.gen();
                    let coverage = if session.query_words.is_empty() {
                        0.0
                    } else {
                        session.query_words.intersection(&session.context_words).count() as f64
                            / session.query_words.len() as f64
                    };
                    let y = (u + coverage) / 2.0;
                    (y, 1.0 - y)
                }
            };
            (Some(pair.0), Some(pair.1))
        } else {
            (None, None)
        };

        Ok(DecideResponse {
            p_yes_raw: p_yes,
            p_no_raw: p_no,
            node_query_attention: attention,
            tokens: Some(DecideTokens {
                scaffold: 0,
                appended,
                generated: u64::from(req.want_decision),
            }),
        })
    }

    fn answer(&self, req: &AnswerRequest) -> Result<AnswerResponse, ProviderError> {
        let tk = tokenizer();
        let sessions = self.sessions.lock().unwrap();
        let session = sessions
            .get(&req.session_id)
            .ok_or_else(|| ProviderError::UnknownSession(req.session_id.clone()))?;
        let text = extract_answer(&session.context.join("\n"), &session.query_words);
        Ok(AnswerResponse {
            tokens: Some(CallTokens {
                prompt: templates::answer_scaffold_tokens(&tk) as u64,
                generated: tk.count(&text) as u64,
            }),
            text,
        })
    }

    fn close_session(&self, session_id: &str) -> Result<(), ProviderError> {
        self.sessions
            .lock()
            .unwrap()
            .remove(session_id)
            .map(|_| ())
            .ok_or_else(|| ProviderError::UnknownSession(session_id.to_string()))
    }
}

impl Embedder for MockProvider {
    fn embed(&self, req: &EmbedRequest) -> Result<EmbedResponse, ProviderError> {
        self.embedder.embed(req)
    }
}

/// Picks the context sentence sharing the most words with the query and
/// returns its words that are not in the query.
fn extract_answer(context: &str, query_words: &BTreeSet<String>) -> String {
    let tk = tokenizer();
    let toks = tk.tokenize(context);
    let mut best: Option<(usize, Vec<&str>)> = None;
    let mut sentence: Vec<&str> = Vec::new();
    fn flush<'a>(sentence: &mut Vec<&'a str>, best: &mut Option<(usize, Vec<&'a str>)>, query_words: &BTreeSet<String>) {
        if sentence.is_empty() {
            return;
        }
        let overlap = sentence
            .iter()
            .map(|w| w.to_lowercase())
            .collect::<BTreeSet<_>>()
            .intersection(query_words)
            .count();
        if best.as_ref().is_none_or(|(o, _)| overlap > *o) {
            *best = Some((overlap, std::mem::take(sentence)));
        } else {
            sentence.clear();
        }
    }
    for t in &toks {
        let s = t.surface(context);
        if matches!(s, "." | "!" | "?") {
            flush(&mut sentence, &mut best, query_words);
        } else if s.chars().any(char::is_alphanumeric) {
            sentence.push(s);
        }
    }
    flush(&mut sentence, &mut best, query_words);
    best.map(|(_, words)| {
        words
            .into_iter()
            .filter(|w| !query_words.contains(&w.to_lowercase()))
            .take(ANSWER_TOKEN_CAP)
            .collect::<Vec<_>>()
            .join(" ")
    })
    .unwrap_or_default()
}
