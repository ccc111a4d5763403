use super::{Hwdag, NodeId, NodeSource};
use crate::tokenizer::Tokenizer;
use serde::Serialize;
use std::fmt;

/// Maximum allowed deviation of an out-edge row sum from 1.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NonAdjacentLevels {
        src: NodeId,
        dst: NodeId,
        src_level: u32,
        dst_level: u32,
    },
    DuplicateEdge {
        src: NodeId,
        dst: NodeId,
    },
    InvalidWeight {
        src: NodeId,
        dst: NodeId,
        weight: f64,
    },
    NormalizationOff {
        node: NodeId,
        sum: f64,
    },
    LevelSourceMismatch {
        node: NodeId,
        level: u32,
        source: NodeSource,
    },
    ZeroTokenCount {
        node: NodeId,
    },
    EmptyLevel {
        level: u32,
    },
    TokenCountMismatch {
        node: NodeId,
        recorded: u32,
        actual: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonAdjacentLevels {
                src,
                dst,
                src_level,
                dst_level,
            } => write!(
                f,
                "non-adjacent levels: edge {src} (level {src_level}) -> {dst} (level {dst_level})"
            ),
            Violation::DuplicateEdge { src, dst } => write!(f, "duplicate edge {src} -> {dst}"),
            Violation::InvalidWeight { src, dst, weight } => {
                write!(f, "invalid weight {weight} on edge {src} -> {dst}")
            }
            Violation::NormalizationOff { node, sum } => write!(
                f,
                "normalization off by {} > {NORMALIZATION_TOLERANCE:e} at node {node} (sum {sum})",
                (sum - 1.0).abs()
            ),
            Violation::LevelSourceMismatch { node, level, source } => {
                write!(f, "node {node} at level {level} has source {source:?}")
            }
            Violation::ZeroTokenCount { node } => write!(f, "node {node} has zero tokens"),
            Violation::EmptyLevel { level } => write!(f, "level {level} has no nodes"),
            Violation::TokenCountMismatch { node, recorded, actual } => write!(
                f,
                "node {node} records {recorded} tokens but the tokenizer counts {actual}"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every structural invariant and reports all violations found.
pub fn validate(graph: &Hwdag) -> ValidationReport {
    let mut violations = Vec::new();

    for node in graph.nodes() {
        let chunk = node.source == NodeSource::Chunk;
        if (node.level == 1) != chunk || node.level == 0 {
            violations.push(Violation::LevelSourceMismatch {
                node: node.id,
                level: node.level,
                source: node.source,
            });
        }
        if node.token_count == 0 {
            violations.push(Violation::ZeroTokenCount { node: node.id });
        }
    }
    for (i, level) in graph.levels().iter().enumerate() {
        if level.is_empty() {
            violations.push(Violation::EmptyLevel { level: i as u32 + 1 });
        }
    }

    for node in graph.nodes() {
        let out = graph.out_edges(node.id);
        if out.is_empty() {
            continue;
        }
        let mut sum = 0.0;
        for (k, e) in out.iter().enumerate() {
            let dst_level = graph.node(e.dst).level;
            if dst_level + 1 != node.level {
                violations.push(Violation::NonAdjacentLevels {
                    src: e.src,
                    dst: e.dst,
                    src_level: node.level,
                    dst_level,
                });
            }
            if k > 0 && out[k - 1].dst == e.dst {
                violations.push(Violation::DuplicateEdge { src: e.src, dst: e.dst });
            }
            if !e.weight.is_finite() || e.weight < 0.0 {
                violations.push(Violation::InvalidWeight {
                    src: e.src,
                    dst: e.dst,
                    weight: e.weight,
                });
            }
            sum += e.weight;
        }
        if !((sum - 1.0).abs() <= NORMALIZATION_TOLERANCE) {
            violations.push(Violation::NormalizationOff { node: node.id, sum });
        }
    }

    ValidationReport { violations }
}

/// [`validate`] plus a check that every node's token count matches `tokenizer`.
pub fn validate_tokens(graph: &Hwdag, tokenizer: &dyn Tokenizer) -> ValidationReport {
    let mut report = validate(graph);
    for node in graph.nodes() {
        let actual = tokenizer.count(&node.text);
        if actual != node.token_count as usize {
            report.violations.push(Violation::TokenCountMismatch {
                node: node.id,
                recorded: node.token_count,
                actual,
            });
        }
    }
    report
}
