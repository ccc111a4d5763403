//! Wire types for the provider protocol (JSON over HTTP, `pecan-protocol: 1`).
//!
//! The same types are used in-process by the mock provider, so every
//! provider is checked against one set of response rules.

use crate::graph::NodeId;
use serde::{Deserialize, Serialize};

pub const PROTOCOL_HEADER: &str = "pecan-protocol";
pub const PROTOCOL_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeText {
    pub node_id: NodeId,
    pub text: String,
}

impl NodeText {
    pub fn new(node_id: NodeId, text: impl Into<String>) -> Self {
        Self {
            node_id,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummarizeRequest {
    pub batch: Vec<NodeText>,
    pub template_id: String,
}

/// Tokens a provider processed to serve one call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CallTokens {
    pub prompt: u64,
    pub generated: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummarizeResponse {
    pub generated_text: String,
    pub generated_tokens: Vec<String>,
    /// `T_gen x K`: attention of each generated token to each batch node.
    pub token_node_attention: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<CallTokens>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRequest {
    pub query: String,
    pub template_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SessionTokens {
    /// Instruction scaffold of the first-turn prompt.
    pub prompt: u64,
    pub query: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResponse {
    pub session_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<SessionTokens>,
}

fn yes() -> bool {
    true
}

fn is_true(v: &bool) -> bool {
    *v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecideRequest {
    pub session_id: String,
    pub append_nodes: Vec<NodeText>,
    /// When false the provider only appends the nodes and reports their query
    /// attention; no Yes/No readout is generated.
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    pub want_decision: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DecideTokens {
    /// Fixed scaffold tokens added around the appended nodes.
    pub scaffold: u64,
    /// New tokens per appended node, in request order.
    pub appended: Vec<u64>,
    pub generated: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecideResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_yes_raw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_no_raw: Option<f64>,
    /// Raw attention of each appended node to the query span.
    #[serde(default)]
    pub node_query_attention: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<DecideTokens>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRequest {
    pub session_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerResponse {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<CallTokens>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
}

/// Error body returned by servers on non-2xx responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
}

pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// JSON Schemas (draft 7) for every message, keyed by message name.
pub const SCHEMAS: [(&str, &str); 11] = [
    ("summarize_request", include_str!("../../schemas/summarize_request.json")),
    ("summarize_response", include_str!("../../schemas/summarize_response.json")),
    ("session_request", include_str!("../../schemas/session_request.json")),
    ("session_response", include_str!("../../schemas/session_response.json")),
    ("decide_request", include_str!("../../schemas/decide_request.json")),
    ("decide_response", include_str!("../../schemas/decide_response.json")),
    ("answer_request", include_str!("../../schemas/answer_request.json")),
    ("answer_response", include_str!("../../schemas/answer_response.json")),
    ("embed_request", include_str!("../../schemas/embed_request.json")),
    ("embed_response", include_str!("../../schemas/embed_response.json")),
    ("error", include_str!("../../schemas/error.json")),
];

impl SummarizeResponse {
    /// Shape and sign rules for a response to a batch of `k` nodes.
    pub fn check(&self, k: usize) -> Result<(), String> {
        if self.generated_tokens.concat() != self.generated_text {
            return Err("generated_tokens do not concatenate to generated_text".into());
        }
        if self.token_node_attention.len() != self.generated_tokens.len() {
            return Err(format!(
                "token_node_attention has {} rows for {} generated tokens",
                self.token_node_attention.len(),
                self.generated_tokens.len()
            ));
        }
        for (t, row) in self.token_node_attention.iter().enumerate() {
            if row.len() != k {
                return Err(format!("token_node_attention row {t} has {} columns, batch has {k}", row.len()));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(format!("token_node_attention row {t} holds invalid entry {v}"));
            }
        }
        Ok(())
    }
}

impl DecideResponse {
    pub fn check(&self, req: &DecideRequest) -> Result<(), String> {
        if req.want_decision {
            if self.p_yes_raw.is_none() {
                return Err("p_yes_raw missing".into());
            }
            if self.p_no_raw.is_none() {
                return Err("p_no_raw missing".into());
            }
        }
        for (name, p) in [("p_yes_raw", self.p_yes_raw), ("p_no_raw", self.p_no_raw)] {
            if let Some(p) = p {
                if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                    return Err(format!("{name} = {p} is not a probability"));
                }
            }
        }
        if let (Some(y), Some(n)) = (self.p_yes_raw, self.p_no_raw) {
            if y + n > 1.0 + 1e-9 {
                return Err(format!("p_yes_raw + p_no_raw = {} exceeds 1", y + n));
            }
        }
        if self.node_query_attention.len() != req.append_nodes.len() {
            return Err(format!(
                "node_query_attention has {} entries for {} appended nodes",
                self.node_query_attention.len(),
                req.append_nodes.len()
            ));
        }
        if let Some(v) = self.node_query_attention.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(format!("node_query_attention holds invalid entry {v}"));
        }
        if let Some(tokens) = &self.tokens {
            if tokens.appended.len() != req.append_nodes.len() {
                return Err("tokens.appended length differs from append_nodes".into());
            }
        }
        Ok(())
    }
}

impl EmbedResponse {
    pub fn check(&self, n: usize) -> Result<(), String> {
        if self.vectors.len() != n {
            return Err(format!("{} vectors for {n} texts", self.vectors.len()));
        }
        let dim = self.vectors.first().map(Vec::len).unwrap_or(0);
        for (i, v) in self.vectors.iter().enumerate() {
            if v.len() != dim || dim == 0 {
                return Err(format!("vector {i} has dimension {}, expected {dim}", v.len()));
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(format!("vector {i} has norm {norm}"));
            }
        }
        Ok(())
    }
}
