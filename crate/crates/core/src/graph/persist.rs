//! Versioned JSON graph files.
//!
//! ```text
//! { "version": 1, "checksum": "<sha256 hex>", "meta": {..}, "nodes": [..], "edges": [..] }
//! ```
//!
//! Edge weights are decimal strings holding the shortest representation that
//! parses back to the identical `f64`. The checksum covers the compact JSON
//! encoding of `{meta, nodes, edges}`.

use super::{validate, Edge, GraphError, GraphMeta, Hwdag, IpNode, ValidationReport};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, thiserror::Error)]
pub enum PersistError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("unknown format version {0}")]
    UnknownVersion(String),
    #[error("checksum mismatch: file says {expected}, content hashes to {actual}")]
    ChecksumMismatch { expected: String, actual: String },
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("refusing to save invalid graph:\n{0}")]
    InvalidGraph(ValidationReport),
}

#[derive(Serialize)]
struct BodyRef<'a> {
    meta: &'a GraphMeta,
    nodes: &'a [IpNode],
    edges: &'a [Edge],
}

#[derive(Serialize)]
struct FileRef<'a> {
    version: u64,
    checksum: String,
    #[serde(flatten)]
    body: BodyRef<'a>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileOwned {
    #[allow(dead_code)]
    version: u64,
    checksum: String,
    meta: GraphMeta,
    nodes: Vec<IpNode>,
    edges: Vec<Edge>,
}

fn checksum(body: &BodyRef<'_>) -> String {
    let bytes = serde_json::to_vec(body).expect("graph body serializes");
    hex::encode(Sha256::digest(bytes))
}

/// Serializes a graph to its file representation.
pub fn to_json(graph: &Hwdag) -> Result<String, PersistError> {
    let report = validate(graph);
    if !report.is_valid() {
        return Err(PersistError::InvalidGraph(report));
    }
    let body = BodyRef {
        meta: graph.meta(),
        nodes: graph.nodes(),
        edges: graph.edges(),
    };
    let file = FileRef {
        version: FORMAT_VERSION,
        checksum: checksum(&body),
        body,
    };
    let mut out = serde_json::to_string_pretty(&file).expect("graph serializes");
    out.push('\n');
    Ok(out)
}

pub fn from_json(text: &str) -> Result<Hwdag, PersistError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| PersistError::Schema(format!("parse error: {e}")))?;
    let version = value
        .get("version")
        .ok_or_else(|| PersistError::Schema("missing field `version`".into()))?;
    if version.as_u64() != Some(FORMAT_VERSION) {
        let shown = match version {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        return Err(PersistError::UnknownVersion(shown));
    }
    let file: FileOwned = serde_json::from_value(value).map_err(|e| PersistError::Schema(e.to_string()))?;
    let actual = checksum(&BodyRef {
        meta: &file.meta,
        nodes: &file.nodes,
        edges: &file.edges,
    });
    if actual != file.checksum {
        return Err(PersistError::ChecksumMismatch {
            expected: file.checksum,
            actual,
        });
    }
    Hwdag::from_parts(file.nodes, file.edges, file.meta).map_err(|e: GraphError| PersistError::Schema(e.to_string()))
}

pub fn save(graph: &Hwdag, path: impl AsRef<Path>) -> Result<(), PersistError> {
    let text = to_json(graph)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Hwdag, PersistError> {
    let text = std::fs::read_to_string(path)?;
    from_json(&text)
}

pub(crate) mod decimal {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(w: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&w.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let s = String::deserialize(d)?;
        s.parse::<f64>()
            .map_err(|_| D::Error::custom(format!("weight {s:?} is not a decimal number")))
    }
}
