//! Hierarchical weighted DAG of Information Points.
//!
//! Level 1 holds the raw document chunks; every higher level holds nodes
//! generated by summarizing the level below. Edges always point from a node
//! at level `l + 1` down to a node at level `l` and carry the normalized
//! attention mass the generated node placed on its source. A missing edge
//! means weight zero.

mod persist;
mod validate;

pub use persist::{from_json, load, save, to_json, PersistError, FORMAT_VERSION};
pub use validate::{validate, validate_tokens, ValidationReport, Violation, NORMALIZATION_TOLERANCE};

use serde::{Deserialize, Serialize};
use std::fmt;

/// Dense node identifier, assigned level-major in construction order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeSource {
    Chunk,
    Generated,
}

/// One Information Point, or a level-1 chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpNode {
    pub id: NodeId,
    pub level: u32,
    pub text: String,
    pub token_count: u32,
    pub source: NodeSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    #[serde(with = "persist::decimal")]
    pub weight: f64,
}

/// Build configuration shared by ingestion and graph construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildConfig {
    pub chunk_size_tokens: usize,
    /// Batch length threshold in tokens.
    pub batch_threshold_s: usize,
    pub min_levels: usize,
    pub tokenizer_id: String,
    /// When false, every batch collapses into a single summary node, which
    /// yields a many-to-one tree instead of the many-to-many IP graph.
    pub ip_graph: bool,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            chunk_size_tokens: 300,
            batch_threshold_s: 8000,
            min_levels: 2,
            tokenizer_id: crate::tokenizer::SimpleTokenizer::ID.to_string(),
            ip_graph: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("chunk_size_tokens must be at least 1")]
    ZeroChunkSize,
    #[error("batch_threshold_s ({s}) must be >= chunk_size_tokens ({chunk})")]
    ThresholdBelowChunk { s: usize, chunk: usize },
    #[error("min_levels must be at least 1")]
    ZeroMinLevels,
    #[error("config names tokenizer {configured} but {supplied} was supplied")]
    TokenizerMismatch { configured: String, supplied: String },
}

impl BuildConfig {
    pub fn check(&self) -> Result<(), ConfigError> {
        if self.chunk_size_tokens == 0 {
            return Err(ConfigError::ZeroChunkSize);
        }
        if self.batch_threshold_s < self.chunk_size_tokens {
            return Err(ConfigError::ThresholdBelowChunk {
                s: self.batch_threshold_s,
                chunk: self.chunk_size_tokens,
            });
        }
        if self.min_levels == 0 {
            return Err(ConfigError::ZeroMinLevels);
        }
        Ok(())
    }

    /// Hex sha256 of the canonical JSON of this config.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// Build provenance and degeneracy flags.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphMeta {
    pub config_hash: String,
    pub provider: String,
    pub tokenizer_id: String,
    /// Generated nodes whose attention row was all zero and fell back to uniform.
    pub degenerate_nodes: Vec<NodeId>,
    /// Generated nodes from a response that carried no bullet markers.
    pub unstructured_nodes: Vec<NodeId>,
    /// Free-form build warnings (empty generations, oversized batches, ...).
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("node at position {position} has id {id}; ids must be dense and ordered")]
    NonDenseId { position: usize, id: NodeId },
    #[error("edge {src} -> {dst} references an unknown node")]
    DanglingEdge { src: NodeId, dst: NodeId },
}

/// Immutable graph. Construct with [`Hwdag::from_parts`].
#[derive(Debug, Clone, PartialEq)]
pub struct Hwdag {
    nodes: Vec<IpNode>,
    /// Sorted by `(src, dst)`.
    edges: Vec<Edge>,
    /// `out_offsets[i]..out_offsets[i + 1]` indexes the out-edges of node `i`.
    out_offsets: Vec<usize>,
    /// Edge indices grouped by destination node.
    in_edges: Vec<Vec<usize>>,
    levels: Vec<Vec<NodeId>>,
    meta: GraphMeta,
}

impl Hwdag {
    /// Assembles a graph, checking only structural soundness (dense ids and
    /// resolvable edge endpoints). Semantic rules are left to [`validate`].
    pub fn from_parts(nodes: Vec<IpNode>, mut edges: Vec<Edge>, meta: GraphMeta) -> Result<Self, GraphError> {
        for (position, node) in nodes.iter().enumerate() {
            if node.id.index() != position {
                return Err(GraphError::NonDenseId { position, id: node.id });
            }
        }
        let n = nodes.len();
        if let Some(e) = edges.iter().find(|e| e.src.index() >= n || e.dst.index() >= n) {
            return Err(GraphError::DanglingEdge { src: e.src, dst: e.dst });
        }
        edges.sort_by_key(|e| (e.src, e.dst));

        let mut out_offsets = vec![0usize; n + 1];
        for e in &edges {
            out_offsets[e.src.index() + 1] += 1;
        }
        for i in 0..n {
            out_offsets[i + 1] += out_offsets[i];
        }
        let mut in_edges = vec![Vec::new(); n];
        for (k, e) in edges.iter().enumerate() {
            in_edges[e.dst.index()].push(k);
        }

        let max_level = nodes.iter().map(|v| v.level).max().unwrap_or(0) as usize;
        let mut levels = vec![Vec::new(); max_level];
        for node in &nodes {
            if node.level >= 1 {
                levels[node.level as usize - 1].push(node.id);
            }
        }

        Ok(Self {
            nodes,
            edges,
            out_offsets,
            in_edges,
            levels,
            meta,
        })
    }

    pub fn into_parts(self) -> (Vec<IpNode>, Vec<Edge>, GraphMeta) {
        (self.nodes, self.edges, self.meta)
    }

    pub fn nodes(&self) -> &[IpNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &IpNode {
        &self.nodes[id.index()]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn meta(&self) -> &GraphMeta {
        &self.meta
    }

    pub fn out_edges(&self, src: NodeId) -> &[Edge] {
        let i = src.index();
        &self.edges[self.out_offsets[i]..self.out_offsets[i + 1]]
    }

    /// Edges pointing into `dst`, i.e. from its predecessors.
    pub fn in_edges(&self, dst: NodeId) -> impl Iterator<Item = &Edge> + '_ {
        self.in_edges[dst.index()].iter().map(|&k| &self.edges[k])
    }

    /// Node ids per level; index 0 is level 1.
    pub fn levels(&self) -> &[Vec<NodeId>] {
        &self.levels
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Nodes of the highest level.
    pub fn top_level(&self) -> &[NodeId] {
        self.levels.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Weight of `src -> dst`, zero when the edge is absent.
    pub fn weight(&self, src: NodeId, dst: NodeId) -> f64 {
        let out = self.out_edges(src);
        out.binary_search_by_key(&dst, |e| e.dst)
            .map(|k| out[k].weight)
            .unwrap_or(0.0)
    }

    /// Dense `|V| x |V|` adjacency matrix with `E[i][j] = e_{i,j}`.
    pub fn adjacency_dense(&self) -> Vec<Vec<f64>> {
        let n = self.nodes.len();
        let mut m = vec![vec![0.0; n]; n];
        for e in &self.edges {
            m[e.src.index()][e.dst.index()] = e.weight;
        }
        m
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn node(id: u32, level: u32, text: &str) -> IpNode {
        IpNode {
            id: NodeId(id),
            level,
            text: text.to_string(),
            token_count: crate::tokenizer::Tokenizer::count(&crate::tokenizer::SimpleTokenizer, text).max(1) as u32,
            source: if level == 1 { NodeSource::Chunk } else { NodeSource::Generated },
        }
    }

    pub fn edge(src: u32, dst: u32, weight: f64) -> Edge {
        Edge {
            src: NodeId(src),
            dst: NodeId(dst),
            weight,
        }
    }

    /// Two chunks and one summary node over both.
    pub fn three_node_graph() -> Hwdag {
        Hwdag::from_parts(
            vec![
                node(0, 1, "cats sleep all day."),
                node(1, 1, "dogs bark at night."),
                node(2, 2, "cats sleep and dogs bark."),
            ],
            vec![edge(2, 0, 0.6), edge(2, 1, 0.4)],
            GraphMeta::default(),
        )
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn indexes_edges_both_ways() {
        let g = three_node_graph();
        assert_eq!(g.out_edges(NodeId(2)).len(), 2);
        assert!(g.out_edges(NodeId(0)).is_empty());
        assert_eq!(g.in_edges(NodeId(1)).map(|e| e.src).collect::<Vec<_>>(), vec![NodeId(2)]);
        assert_eq!(g.weight(NodeId(2), NodeId(1)), 0.4);
        assert_eq!(g.weight(NodeId(0), NodeId(1)), 0.0);
        assert_eq!(g.top_level(), &[NodeId(2)]);
        assert_eq!(g.adjacency_dense()[2], vec![0.6, 0.4, 0.0]);
    }

    #[test]
    fn rejects_structural_errors() {
        let err = Hwdag::from_parts(vec![node(1, 1, "x")], vec![], GraphMeta::default()).unwrap_err();
        assert!(matches!(err, GraphError::NonDenseId { .. }));
        let err = Hwdag::from_parts(vec![node(0, 1, "x")], vec![edge(0, 5, 1.0)], GraphMeta::default()).unwrap_err();
        assert!(matches!(err, GraphError::DanglingEdge { .. }));
    }

    #[test]
    fn config_checks() {
        assert!(BuildConfig::default().check().is_ok());
        let bad = BuildConfig {
            batch_threshold_s: 10,
            chunk_size_tokens: 20,
            ..Default::default()
        };
        assert_eq!(bad.check(), Err(ConfigError::ThresholdBelowChunk { s: 10, chunk: 20 }));
        assert_eq!(BuildConfig::default().hash(), BuildConfig::default().hash());
    }
}
