//! Attention aggregation arithmetic.
//!
//! Providers report attention at token-to-source-node granularity, already
//! averaged over heads, layers and each source node's own tokens. This module
//! finishes the reduction: averaging over the tokens of each generated
//! Information Point and normalizing each row into edge weights. It also
//! holds the position-index scaling applied to query relevance.

use crate::graph::NodeId;
use serde::{Deserialize, Serialize};
use std::ops::Range;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AttentionError {
    #[error("attention matrix must have at least one row and one column (got {rows} x {cols})")]
    EmptyMatrix { rows: usize, cols: usize },
    #[error("attention row {row} has {len} entries, expected {expected}")]
    Ragged { row: usize, len: usize, expected: usize },
    #[error("attention entry ({row}, {col}) = {value} is not a finite non-negative number")]
    InvalidEntry { row: usize, col: usize, value: f64 },
    #[error("empty IP span (IP {0})")]
    EmptySpan(usize),
    #[error("IP span {index} [{start}, {end}) is out of bounds or overlaps its predecessor")]
    BadSpan { index: usize, start: usize, end: usize },
    #[error("query occupies position 1; node positions start at 2 (got {0})")]
    QueryPosition(usize),
}

/// `T_gen x K` matrix: row `t` is generated token `t`'s attention to each of
/// the `K` source nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenNodeAttention {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TokenNodeAttention {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, AttentionError> {
        let cols = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() || cols == 0 {
            return Err(AttentionError::EmptyMatrix {
                rows: rows.len(),
                cols,
            });
        }
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(AttentionError::Ragged {
                    row: r,
                    len: row.len(),
                    expected: cols,
                });
            }
            for (c, &value) in row.iter().enumerate() {
                if !value.is_finite() || value < 0.0 {
                    return Err(AttentionError::InvalidEntry { row: r, col: c, value });
                }
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Number of generated tokens.
    pub fn t_gen(&self) -> usize {
        self.rows
    }

    /// Number of source nodes.
    pub fn k(&self) -> usize {
        self.cols
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.cols..(t + 1) * self.cols]
    }
}

/// Half-open range of generated tokens belonging to one Information Point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IpSpan {
    pub ip_index: usize,
    pub start: usize,
    pub end: usize,
}

impl IpSpan {
    pub fn new(ip_index: usize, range: Range<usize>) -> Self {
        Self {
            ip_index,
            start: range.start,
            end: range.end,
        }
    }

    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }
}

/// Row-normalized edge weights, one row per IP, one column per source node.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRows {
    pub rows: Vec<Vec<f64>>,
    /// Rows whose attention was entirely zero and fell back to uniform.
    pub degenerate: Vec<bool>,
}

/// Averages attention rows within each span, then divides by the row sum.
pub fn aggregate_edges(attn: &TokenNodeAttention, spans: &[IpSpan]) -> Result<EdgeRows, AttentionError> {
    let mut prev_end = 0;
    for (index, span) in spans.iter().enumerate() {
        if span.start == span.end {
            return Err(AttentionError::EmptySpan(span.ip_index));
        }
        if span.start > span.end || span.end > attn.t_gen() || span.start < prev_end {
            return Err(AttentionError::BadSpan {
                index,
                start: span.start,
                end: span.end,
            });
        }
        prev_end = span.end;
    }

    let k = attn.k();
    let mut rows = Vec::with_capacity(spans.len());
    let mut degenerate = Vec::with_capacity(spans.len());
    for span in spans {
        let mut mean = vec![0.0; k];
        for t in span.range() {
            for (acc, &v) in mean.iter_mut().zip(attn.row(t)) {
                *acc += v;
            }
        }
        let len = (span.end - span.start) as f64;
        mean.iter_mut().for_each(|v| *v /= len);

        let total: f64 = mean.iter().sum();
        if total > 0.0 {
            mean.iter_mut().for_each(|v| *v /= total);
            degenerate.push(false);
        } else {
            mean.iter_mut().for_each(|v| *v = 1.0 / k as f64);
            degenerate.push(true);
        }
        rows.push(mean);
    }
    Ok(EdgeRows { rows, degenerate })
}

/// A visited node's attention to the query, scaled by its context position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryRelevance {
    pub node_id: NodeId,
    pub r_raw: f64,
    pub position_index: usize,
    pub r: f64,
}

impl QueryRelevance {
    pub fn new(node_id: NodeId, r_raw: f64, position_index: usize) -> Result<Self, AttentionError> {
        Ok(Self {
            node_id,
            r_raw,
            position_index,
            r: position_normalize(r_raw, position_index)?,
        })
    }
}

/// Later nodes spread attention over more preceding context, so raw query
/// attention is multiplied by the node's position (query = 1, first node = 2).
pub fn position_normalize(r_raw: f64, position_index: usize) -> Result<f64, AttentionError> {
    if position_index < 2 {
        return Err(AttentionError::QueryPosition(position_index));
    }
    Ok(r_raw * position_index as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn attn(rows: &[&[f64]]) -> TokenNodeAttention {
        TokenNodeAttention::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn two_token_span_mean_then_normalize() {
        let a = attn(&[&[0.2, 0.6], &[0.4, 0.2]]);
        let out = aggregate_edges(&a, &[IpSpan::new(0, 0..2)]).unwrap();
        // mean [0.3, 0.4], divided by 0.7
        assert!((out.rows[0][0] - 3.0 / 7.0).abs() < 1e-12);
        assert!((out.rows[0][1] - 4.0 / 7.0).abs() < 1e-12);
        assert_eq!(out.degenerate, vec![false]);
    }

    #[test]
    fn single_source_normalizes_to_one() {
        let a = attn(&[&[0.37], &[0.01]]);
        let out = aggregate_edges(&a, &[IpSpan::new(0, 0..2)]).unwrap();
        assert_eq!(out.rows, vec![vec![1.0]]);
    }

    #[test]
    fn all_zero_row_falls_back_to_uniform() {
        let a = attn(&[&[0.0, 0.0], &[0.0, 0.0], &[0.3, 0.1]]);
        let out = aggregate_edges(&a, &[IpSpan::new(0, 0..2), IpSpan::new(1, 2..3)]).unwrap();
        assert_eq!(out.rows[0], vec![0.5, 0.5]);
        assert_eq!(out.degenerate, vec![true, false]);
    }

    #[test]
    fn rejects_bad_spans_and_matrices() {
        let a = attn(&[&[0.1, 0.2], &[0.3, 0.4]]);
        assert_eq!(
            aggregate_edges(&a, &[IpSpan::new(0, 1..1)]).unwrap_err(),
            AttentionError::EmptySpan(0)
        );
        assert_eq!(aggregate_edges(&a, &[IpSpan::new(0, 1..1)]).unwrap_err().to_string(), "empty IP span (IP 0)");
        assert!(matches!(
            aggregate_edges(&a, &[IpSpan::new(0, 0..3)]),
            Err(AttentionError::BadSpan { .. })
        ));
        assert!(matches!(
            aggregate_edges(&a, &[IpSpan::new(0, 0..2), IpSpan::new(1, 1..2)]),
            Err(AttentionError::BadSpan { .. })
        ));
        assert!(TokenNodeAttention::from_rows(&[]).is_err());
        assert!(TokenNodeAttention::from_rows(&[vec![0.1], vec![0.1, 0.2]]).is_err());
        assert!(TokenNodeAttention::from_rows(&[vec![-0.1]]).is_err());
    }

    #[test]
    fn position_scaling() {
        assert_eq!(position_normalize(0.1, 4).unwrap(), 0.4);
        assert_eq!(position_normalize(0.3, 2).unwrap(), 0.6);
        assert_eq!(position_normalize(0.0, 17).unwrap(), 0.0);
        assert_eq!(position_normalize(0.5, 1).unwrap_err(), AttentionError::QueryPosition(1));
        let q = QueryRelevance::new(NodeId(3), 0.25, 3).unwrap();
        assert_eq!(q.r, 0.75);
    }

    fn matrix(max_t: usize, max_k: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1..=max_t, 1..=max_k).prop_flat_map(|(t, k)| {
            proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, k), t)
        })
    }

    proptest! {
        #[test]
        fn rows_sum_to_one(rows in matrix(12, 6), cut in 0usize..12) {
            let a = TokenNodeAttention::from_rows(&rows).unwrap();
            let t = a.t_gen();
            let cut = cut.min(t - 1);
            let spans = if cut == 0 {
                vec![IpSpan::new(0, 0..t)]
            } else {
                vec![IpSpan::new(0, 0..cut), IpSpan::new(1, cut..t)]
            };
            let out = aggregate_edges(&a, &spans).unwrap();
            for row in &out.rows {
                let sum: f64 = row.iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn invariant_under_positive_scaling(rows in matrix(8, 5), c in 1e-3f64..1e3) {
            let a = TokenNodeAttention::from_rows(&rows).unwrap();
            let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v * c).collect()).collect();
            let b = TokenNodeAttention::from_rows(&scaled).unwrap();
            let spans = [IpSpan::new(0, 0..a.t_gen())];
            let x = aggregate_edges(&a, &spans).unwrap();
            let y = aggregate_edges(&b, &spans).unwrap();
            for (p, q) in x.rows[0].iter().zip(&y.rows[0]) {
                prop_assert!((p - q).abs() < 1e-9);
            }
        }

        #[test]
        fn full_span_is_normalized_column_mean(rows in matrix(8, 5)) {
            let a = TokenNodeAttention::from_rows(&rows).unwrap();
            let out = aggregate_edges(&a, &[IpSpan::new(0, 0..a.t_gen())]).unwrap();
            let k = a.k();
            let col_sums: Vec<f64> = (0..k).map(|j| rows.iter().map(|r| r[j]).sum()).collect();
            let total: f64 = col_sums.iter().sum();
            prop_assume!(total > 0.0);
            for j in 0..k {
                prop_assert!((out.rows[0][j] - col_sums[j] / total).abs() < 1e-9);
            }
        }

        #[test]
        fn position_scaling_is_linear_and_monotone(r in 0.0f64..10.0, s in 0.0f64..10.0, p in 2usize..1000) {
            let lhs = position_normalize(r + s, p).unwrap();
            let rhs = position_normalize(r, p).unwrap() + position_normalize(s, p).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
            if r > 0.0 {
                prop_assert!(position_normalize(r, p + 1).unwrap() > position_normalize(r, p).unwrap());
            }
        }
    }
}
