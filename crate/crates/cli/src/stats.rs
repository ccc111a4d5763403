//! `graph stats` summary.

use pecan_core::{Hwdag, NodeId};
use serde::Serialize;
use std::fmt::Write;

const WEIGHT_BINS: usize = 10;

#[derive(Debug, Serialize)]
pub struct LevelStats {
    pub level: usize,
    pub nodes: usize,
    pub tokens: u64,
}

#[derive(Debug, Serialize)]
pub struct WeightStats {
    pub count: usize,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    /// Counts over `[0, 0.1), [0.1, 0.2), ..., [0.9, 1.0]`.
    pub bins: Vec<usize>,
}

#[derive(Debug, Serialize)]
pub struct GraphStats {
    pub provider: String,
    pub config_hash: String,
    pub nodes: usize,
    pub levels: Vec<LevelStats>,
    pub edge_weights: WeightStats,
    pub degenerate_nodes: Vec<NodeId>,
    pub unstructured_nodes: Vec<NodeId>,
    pub warnings: Vec<String>,
}

pub fn compute(g: &Hwdag) -> GraphStats {
    let levels = g
        .levels()
        .iter()
        .enumerate()
        .map(|(i, ids)| LevelStats {
            level: i + 1,
            nodes: ids.len(),
            tokens: ids.iter().map(|&id| g.node(id).token_count as u64).sum(),
        })
        .collect();
    let weights: Vec<f64> = g.edges().iter().map(|e| e.weight).collect();
    let mut bins = vec![0; WEIGHT_BINS];
    for &w in &weights {
        bins[((w * WEIGHT_BINS as f64) as usize).min(WEIGHT_BINS - 1)] += 1;
    }
    let edge_weights = WeightStats {
        count: weights.len(),
        min: weights.iter().copied().fold(f64::INFINITY, f64::min),
        mean: weights.iter().sum::<f64>() / weights.len().max(1) as f64,
        max: weights.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        bins,
    };
    let meta = g.meta();
    GraphStats {
        provider: meta.provider.clone(),
        config_hash: meta.config_hash.clone(),
        nodes: g.len(),
        levels,
        edge_weights,
        degenerate_nodes: meta.degenerate_nodes.clone(),
        unstructured_nodes: meta.unstructured_nodes.clone(),
        warnings: meta.warnings.clone(),
    }
}

fn ids(list: &[NodeId]) -> String {
    if list.is_empty() {
        return "none".into();
    }
    list.iter().map(|id| id.0.to_string()).collect::<Vec<_>>().join(", ")
}

pub fn render(s: &GraphStats) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "provider: {}", s.provider);
    let _ = writeln!(out, "nodes: {}", s.nodes);
    for l in &s.levels {
        let _ = writeln!(out, "level {}: {} nodes, {} tokens", l.level, l.nodes, l.tokens);
    }
    let w = &s.edge_weights;
    if w.count == 0 {
        let _ = writeln!(out, "edges: 0");
    } else {
        let _ = writeln!(out, "edges: {} (weight min {:.4}, mean {:.4}, max {:.4})", w.count, w.min, w.mean, w.max);
        for (i, c) in w.bins.iter().enumerate() {
            let lo = i as f64 / WEIGHT_BINS as f64;
            let _ = writeln!(out, "  [{:.1}, {:.1}{} {}", lo, lo + 0.1, if i + 1 == WEIGHT_BINS { "]" } else { ")" }, c);
        }
    }
    let _ = writeln!(out, "degenerate nodes: {}", ids(&s.degenerate_nodes));
    let _ = writeln!(out, "unstructured nodes: {}", ids(&s.unstructured_nodes));
    for warning in &s.warnings {
        let _ = writeln!(out, "warning: {warning}");
    }
    out
}
