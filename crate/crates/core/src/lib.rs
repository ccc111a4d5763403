//! Query-time retrieval over a hierarchical graph of Information Points.
//!
//! Documents are chunked and summarized level by level into a weighted DAG
//! ([`build_graph`]). At query time, [`run_search`] walks the graph guided by
//! the model's attention and stops once the model reports it can answer.

pub mod attention;
pub mod builder;
pub mod eval;
pub mod graph;
pub mod ingest;
pub mod providers;
pub mod search;
pub mod tokenizer;

pub use attention::{aggregate_edges, position_normalize, AttentionError, IpSpan, QueryRelevance, TokenNodeAttention};
pub use builder::{build_graph, parse_ips, BuildError, BuildTrace, ReplaySummarizer};
pub use graph::{BuildConfig, Edge, GraphMeta, Hwdag, IpNode, NodeId, NodeSource};
pub use ingest::{chunk_document, Document, IngestError};
pub use providers::{MockProvider, Provider, ProviderError};
pub use search::{run_search, SearchConfig, SearchError, SearchResult, StopReason};
pub use tokenizer::{SimpleTokenizer, Tokenizer, TokenizerHandle};
