//! Seeded fixtures shared by the benchmarks.

use pecan_core::{Document, Edge, GraphMeta, Hwdag, IpNode, IpSpan, NodeId, NodeSource, QueryRelevance, TokenNodeAttention};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random layered graph. `widths[0]` is the chunk level; each node above it
/// points at up to `fanout` nodes one level down with row-normalized weights.
pub fn layered_graph(seed: u64, widths: &[usize], fanout: usize) -> Hwdag {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = Vec::new();
    let mut levels: Vec<Vec<u32>> = Vec::new();
    for (l, &w) in widths.iter().enumerate() {
        let ids = (0..w)
            .map(|_| {
                let id = nodes.len() as u32;
                nodes.push(IpNode {
                    id: NodeId(id),
                    level: l as u32 + 1,
                    text: format!("node {id}"),
                    token_count: 2,
                    source: if l == 0 { NodeSource::Chunk } else { NodeSource::Generated },
                });
                id
            })
            .collect();
        levels.push(ids);
    }
    let mut edges = Vec::new();
    for pair in levels.windows(2) {
        let (below, above) = (&pair[0], &pair[1]);
        for &src in above {
            let k = fanout.clamp(1, below.len());
            let dsts: Vec<u32> = below.choose_multiple(&mut rng, k).copied().collect();
            let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            for (&dst, w) in dsts.iter().zip(raw) {
                edges.push(Edge {
                    src: NodeId(src),
                    dst: NodeId(dst),
                    weight: w / sum,
                });
            }
        }
    }
    Hwdag::from_parts(nodes, edges, GraphMeta::default()).expect("fixture graph is well formed")
}

/// Relevance entries for the top level plus `extra` random lower nodes, in visit order.
pub fn visited_relevance(graph: &Hwdag, extra: usize, seed: u64) -> Vec<QueryRelevance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<NodeId> = graph.top_level().to_vec();
    let mut rest: Vec<NodeId> = graph.nodes().iter().map(|n| n.id).filter(|id| !order.contains(id)).collect();
    rest.shuffle(&mut rng);
    order.extend(rest.into_iter().take(extra));
    order
        .into_iter()
        .enumerate()
        .map(|(i, id)| QueryRelevance::new(id, rng.gen_range(0.0..0.1), i + 2).expect("position is at least 2"))
        .collect()
}

/// `t_gen x n_src` attention with `n_ips` contiguous spans covering every row.
pub fn attention_fixture(t_gen: usize, n_src: usize, n_ips: usize, seed: u64) -> (TokenNodeAttention, Vec<IpSpan>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..t_gen).map(|_| (0..n_src).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
    let n_ips = n_ips.clamp(1, t_gen);
    let spans = (0..n_ips)
        .map(|i| IpSpan {
            ip_index: i,
            start: i * t_gen / n_ips,
            end: (i + 1) * t_gen / n_ips,
        })
        .collect();
    (TokenNodeAttention::from_rows(&rows).expect("fixture attention is valid"), spans)
}

const WORDS: [&str; 24] = [
    "harbour", "lantern", "miller", "orchard", "bridge", "council", "river", "cider", "ferry", "chapel", "market", "weaver",
    "shepherd", "granary", "tavern", "quarry", "beacon", "meadow", "forge", "abbey", "wharf", "loom", "kiln", "mill",
];

/// Synthetic prose of roughly `sentences * 9` tokens.
pub fn document(sentences: usize, seed: u64) -> Document {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let text: Vec<String> = (0..sentences)
        .map(|_| {
            let w: Vec<&str> = (0..7).map(|_| *WORDS.choose(&mut rng).unwrap()).collect();
            format!("The {} {}.", w[0], w[1..].join(" "))
        })
        .collect();
    Document::new(format!("bench-{seed}"), text.join(" "))
}
