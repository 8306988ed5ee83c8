use std::collections::HashSet;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Edge, Graph, NodeMasks};
use crate::error::{Error, Result};
use crate::seed::derive_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitRatios {
    pub const fn new(train: f64, val: f64, test: f64) -> Self {
        SplitRatios { train, val, test }
    }

    /// Default link split: 85/5/10.
    pub const LINK_DEFAULT: SplitRatios = SplitRatios::new(0.85, 0.05, 0.10);
    /// Default node split over labeled nodes: 50/25/25.
    pub const NODE_DEFAULT: SplitRatios = SplitRatios::new(0.5, 0.25, 0.25);

    fn validate(&self) -> Result<()> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|r| !(0.0..=1.0).contains(r)) || (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split ratios must be in [0,1] and sum to 1, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Sizes `(train, val, test)` for `total` items. Val and test are
    /// rounded, train takes the remainder.
    fn sizes(&self, total: usize) -> (usize, usize, usize) {
        let val = (self.val * total as f64).round() as usize;
        let test = ((self.test * total as f64).round() as usize).min(total - val);
        (total - val - test, val, test)
    }
}

/// Positive and negative edges per split for link prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSplit {
    pub train_pos: Vec<Edge>,
    pub val_pos: Vec<Edge>,
    pub test_pos: Vec<Edge>,
    pub train_neg: Vec<Edge>,
    pub val_neg: Vec<Edge>,
    pub test_neg: Vec<Edge>,
    pub ratios: SplitRatios,
    pub seed: u64,
}

impl EdgeSplit {
    /// `graph` restricted to the training positives; used as the message
    /// passing graph so that held-out edges never leak into embeddings.
    pub fn train_graph(&self, graph: &Graph) -> Result<Graph> {
        graph.with_edges(self.train_pos.iter().copied())
    }
}

/// Splits the edges of `graph` into disjoint train/val/test positives and
/// samples an equal number of non-edges for each split.
pub fn split_edges(graph: &Graph, ratios: SplitRatios, seed: u64) -> Result<EdgeSplit> {
    ratios.validate()?;
    let m = graph.num_edges();
    if m < 10 {
        return Err(Error::GraphTooSmall(format!("{m} edges, need at least 10")));
    }
    let n = graph.num_nodes();
    let total_pairs = n * (n - 1) / 2;
    let available = total_pairs - m;
    if available < m {
        return Err(Error::InsufficientNonEdges { needed: m, available });
    }
    let mut rng = derive_rng(seed, "split_edges");
    let mut pos: Vec<Edge> = graph.edges().to_vec();
    pos.shuffle(&mut rng);
    let (n_train, n_val, _) = ratios.sizes(m);
    let test_pos = pos.split_off(n_train + n_val);
    let val_pos = pos.split_off(n_train);
    let train_pos = pos;

    let mut neg = sample_non_edges(graph, m, &mut rng);
    let test_neg = neg.split_off(n_train + n_val);
    let val_neg = neg.split_off(n_train);
    Ok(EdgeSplit {
        train_pos,
        val_pos,
        test_pos,
        train_neg: neg,
        val_neg,
        test_neg,
        ratios,
        seed,
    })
}

/// `count` distinct non-edges drawn uniformly without replacement. The
/// caller guarantees enough exist.
pub fn sample_non_edges(graph: &Graph, count: usize, rng: &mut crate::seed::Rng) -> Vec<Edge> {
    let n = graph.num_nodes();
    let available = n * (n - 1) / 2 - graph.num_edges();
    debug_assert!(count <= available);
    if count * 2 > available {
        // dense regime: enumerate and shuffle
        let mut all: Vec<Edge> = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .filter(|&(u, v)| !graph.has_edge(u, v))
            .collect();
        all.shuffle(rng);
        all.truncate(count);
        return all;
    }
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u == v {
            continue;
        }
        let e = (u.min(v), u.max(v));
        if graph.has_edge(e.0, e.1) || !seen.insert(e) {
            continue;
        }
        out.push(e);
    }
    out
}

/// Random node split over labeled nodes (all nodes when the graph has no
/// labels).
pub fn node_split(graph: &Graph, ratios: SplitRatios, seed: u64) -> Result<NodeMasks> {
    ratios.validate()?;
    let n = graph.num_nodes();
    let mut idx: Vec<usize> = match &graph.labels {
        Some(l) => (0..n).filter(|&i| l[i] >= 0).collect(),
        None => (0..n).collect(),
    };
    let mut rng = derive_rng(seed, "node_split");
    idx.shuffle(&mut rng);
    let (n_train, n_val, _) = ratios.sizes(idx.len());
    let mut masks = NodeMasks::empty(n);
    for (k, &i) in idx.iter().enumerate() {
        if k < n_train {
            masks.train[i] = true;
        } else if k < n_train + n_val {
            masks.val[i] = true;
        } else {
            masks.test[i] = true;
        }
    }
    Ok(masks)
}

/// Induced subgraph on `size` nodes sampled uniformly without replacement.
/// Sampled nodes keep their relative order, so `size == n` returns the
/// original graph.
pub fn minibatch_subgraph(graph: &Graph, size: usize, seed: u64) -> Result<Graph> {
    graph.induced_subgraph(&minibatch_nodes(graph.num_nodes(), size, seed)?)
}

/// Sorted node indices of the mini-batch drawn by [`minibatch_subgraph`].
pub fn minibatch_nodes(n: usize, size: usize, seed: u64) -> Result<Vec<usize>> {
    if size == 0 || size > n {
        return Err(Error::OutOfRange {
            what: "mini-batch size",
            value: size.to_string(),
            range: format!("1..={n}"),
        });
    }
    let mut rng = derive_rng(seed, "minibatch");
    let mut nodes = index::sample(&mut rng, n, size).into_vec();
    nodes.sort_unstable();
    Ok(nodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn ring(n: usize, chords: usize) -> Graph {
        let mut edges: Vec<Edge> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        edges.extend((0..chords).map(|i| (i, (i + n / 2) % n)));
        Graph::new(Array2::zeros((n, 1)), edges, (0..n).map(|i| i % 2).collect(), None).unwrap()
    }

    #[test]
    fn ten_edges_split_8_1_1() {
        let g = ring(10, 0);
        let s = split_edges(&g, SplitRatios::new(0.8, 0.1, 0.1), 0).unwrap();
        assert_eq!((s.train_pos.len(), s.val_pos.len(), s.test_pos.len()), (8, 1, 1));
        assert_eq!((s.train_neg.len(), s.val_neg.len(), s.test_neg.len()), (8, 1, 1));
    }

    #[test]
    fn too_small_and_too_dense() {
        let g = ring(5, 0);
        assert!(matches!(
            split_edges(&g, SplitRatios::LINK_DEFAULT, 0),
            Err(Error::GraphTooSmall(_))
        ));
        // K6 minus one edge: 14 edges, 1 non-edge
        let mut edges = vec![];
        for u in 0..6 {
            for v in u + 1..6 {
                if (u, v) != (0, 1) {
                    edges.push((u, v));
                }
            }
        }
        let g = Graph::new(Array2::zeros((6, 1)), edges, vec![0; 6], None).unwrap();
        assert!(matches!(
            split_edges(&g, SplitRatios::LINK_DEFAULT, 0),
            Err(Error::InsufficientNonEdges { needed: 14, available: 1 })
        ));
    }

    #[test]
    fn bad_ratios_rejected() {
        let g = ring(20, 0);
        assert!(split_edges(&g, SplitRatios::new(0.5, 0.1, 0.1), 0).is_err());
    }

    #[test]
    fn minibatch_bounds_and_full_sample() {
        let g = ring(12, 3);
        assert!(minibatch_subgraph(&g, 0, 1).is_err());
        assert!(minibatch_subgraph(&g, 13, 1).is_err());
        assert_eq!(minibatch_subgraph(&g, 12, 7).unwrap(), g);
        let one = minibatch_subgraph(&g, 1, 7).unwrap();
        assert_eq!((one.num_nodes(), one.num_edges()), (1, 0));
        assert_eq!(minibatch_subgraph(&g, 5, 3).unwrap(), minibatch_subgraph(&g, 5, 3).unwrap());
    }

    #[test]
    fn node_split_uses_labeled_nodes_only() {
        let mut g = ring(10, 0);
        g.labels = Some(vec![1, 0, -1, 1, 0, 1, -1, 0, 1, 0]);
        let m = node_split(&g, SplitRatios::NODE_DEFAULT, 3).unwrap();
        assert!(!m.train[2] && !m.val[2] && !m.test[2]);
        let counts = [&m.train, &m.val, &m.test].map(|v| v.iter().filter(|&&b| b).count());
        assert_eq!(counts, [4, 2, 2]);
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n in 12usize..30, chords in 0usize..8, seed in 0u64..1000) {
            let g = ring(n, chords.min(n / 2));
            let s = split_edges(&g, SplitRatios::LINK_DEFAULT, seed).unwrap();
            let mut all: Vec<Edge> = s.train_pos.iter().chain(&s.val_pos).chain(&s.test_pos).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(&all[..], g.edges());
            let negs: Vec<Edge> = s.train_neg.iter().chain(&s.val_neg).chain(&s.test_neg).copied().collect();
            let uniq: HashSet<Edge> = negs.iter().copied().collect();
            prop_assert_eq!(uniq.len(), negs.len());
            for &(u, v) in &negs {
                prop_assert!(u < v && !g.has_edge(u, v));
            }
            prop_assert_eq!(s.clone(), split_edges(&g, SplitRatios::LINK_DEFAULT, seed).unwrap());
        }

        #[test]
        fn minibatch_preserves_invariants(n in 2usize..40, size_frac in 0.05f64..1.0, seed in 0u64..100) {
            let g = ring(n, n / 3);
            let size = ((n as f64 * size_frac).ceil() as usize).clamp(1, n);
            let s = minibatch_subgraph(&g, size, seed).unwrap();
            s.validate().unwrap();
            prop_assert_eq!(s.num_nodes(), size);
        }
    }
}
