//! Provider abstraction: summarization with attention, append-only decision
//! sessions, and embeddings.
//!
//! The builder only needs a [`Summarizer`]; the search loop needs a
//! [`SessionProvider`] and, when embedding similarity is on, an [`Embedder`].
//! [`MockProvider`] implements all three deterministically, and
//! [`HttpProvider`] speaks the JSON wire protocol to a remote service.

pub mod conformance;
pub mod embed;
pub mod http;
pub mod mock;
pub mod protocol;
pub mod templates;

pub use embed::HashedBowEmbedder;
pub use http::{HttpConfig, HttpProvider};
pub use mock::{DecisionSource, MockProvider};
pub use protocol::*;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProviderError {
    #[error("protocol-version mismatch: expected {expected}, server speaks {got}")]
    ProtocolMismatch { expected: String, got: String },
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("retries exhausted after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("provider returned HTTP {status}: {message}")]
    Http { status: u16, message: String },
    #[error("provider unreachable: {0}")]
    Unreachable(String),
    #[error("unknown session_id {0}")]
    UnknownSession(String),
    #[error("window exceeded: {0}")]
    WindowExceeded(String),
    #[error("script exhausted")]
    ScriptExhausted,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

pub trait Summarizer: Send + Sync {
    /// Provider identity recorded in graph metadata.
    fn identity(&self) -> String;

    fn summarize(&self, req: &SummarizeRequest) -> Result<SummarizeResponse, ProviderError>;
}

/// Append-only conversational session over a cached context.
pub trait SessionProvider: Send + Sync {
    fn create_session(&self, req: &SessionRequest) -> Result<SessionResponse, ProviderError>;

    /// Appends nodes to the session context and, if requested, reads out the
    /// raw Yes/No next-token probabilities.
    fn decide(&self, req: &DecideRequest) -> Result<DecideResponse, ProviderError>;

    fn answer(&self, req: &AnswerRequest) -> Result<AnswerResponse, ProviderError>;

    fn close_session(&self, session_id: &str) -> Result<(), ProviderError>;
}

pub trait Embedder: Send + Sync {
    fn embed(&self, req: &EmbedRequest) -> Result<EmbedResponse, ProviderError>;
}

/// Everything a full pipeline needs.
pub trait Provider: Summarizer + SessionProvider + Embedder {}

impl<T: Summarizer + SessionProvider + Embedder> Provider for T {}
