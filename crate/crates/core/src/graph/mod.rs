//! Graph data model: `G = {A, X, S}` plus optional labels and node splits.

pub mod convert;
pub mod dataset;
pub mod split;
pub mod synthetic;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dataset::{load_dataset, DatasetSpec, EdgeConvention, ExpectedStats};
pub use split::{minibatch_nodes, minibatch_subgraph, node_split, split_edges, EdgeSplit, SplitRatios};

/// Undirected edge in canonical `(min, max)` order.
pub type Edge = (usize, usize);

/// Train/val/test node masks. Pairwise disjoint.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeMasks {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

impl NodeMasks {
    pub fn empty(n: usize) -> Self {
        NodeMasks {
            train: vec![false; n],
            val: vec![false; n],
            test: vec![false; n],
        }
    }

    pub fn indices(mask: &[bool]) -> Vec<usize> {
        mask.iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }
}

/// Attributed graph with a sensitive attribute.
///
/// The adjacency is stored as a sorted, deduplicated list of undirected
/// edges with `u < v` (so it is symmetric with zero diagonal by
/// construction), plus a CSR neighbor index.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<Edge>,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    pub features: Array2<f64>,
    pub sensitive: Vec<usize>,
    pub sensitive_count: usize,
    /// Class labels; negative values mark unlabeled nodes.
    pub labels: Option<Vec<i64>>,
    pub masks: NodeMasks,
}

impl Graph {
    /// Builds a graph, canonicalizing the edge list (self-loops dropped,
    /// duplicates and reversed duplicates merged) and validating invariants.
    pub fn new(
        features: Array2<f64>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        sensitive: Vec<usize>,
        labels: Option<Vec<i64>>,
    ) -> Result<Self> {
        let n = features.nrows();
        let mut canon: Vec<Edge> = Vec::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) references a node outside 0..{n}"
                )));
            }
            if u != v {
                canon.push((u.min(v), u.max(v)));
            }
        }
        canon.sort_unstable();
        canon.dedup();
        let sensitive_count = validate_sensitive(&sensitive, n)?;
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "labels",
                    expected: n,
                    found: l.len(),
                });
            }
        }
        let (offsets, neighbors) = build_csr(n, &canon);
        Ok(Graph {
            n,
            edges: canon,
            offsets,
            neighbors,
            features,
            sensitive,
            sensitive_count,
            labels,
            masks: NodeMasks::empty(n),
        })
    }

    pub fn with_masks(mut self, masks: NodeMasks) -> Result<Self> {
        validate_masks(&masks, self.n)?;
        self.masks = masks;
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Dense 0/1 adjacency. Quadratic memory; intended for small graphs.
    pub fn dense_adjacency(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.n, self.n));
        for &(u, v) in &self.edges {
            a[[u, v]] = 1.0;
            a[[v, u]] = 1.0;
        }
        a
    }

    /// Same nodes and attributes with a different edge set.
    pub fn with_edges(&self, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Graph> {
        let g = Graph::new(
            self.features.clone(),
            edges,
            self.sensitive.clone(),
            self.labels.clone(),
        )?;
        // keep the label space of the parent graph
        let g = Graph {
            sensitive_count: self.sensitive_count,
            ..g
        };
        g.with_masks(self.masks.clone())
    }

    /// Induced subgraph on `nodes` (in the given order).
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Result<Graph> {
        let mut remap = vec![usize::MAX; self.n];
        for (new, &old) in nodes.iter().enumerate() {
            if old >= self.n {
                return Err(Error::OutOfRange {
                    what: "node index",
                    value: old.to_string(),
                    range: format!("0..{}", self.n),
                });
            }
            if remap[old] != usize::MAX {
                return Err(Error::InvalidGraph(format!("node {old} selected twice")));
            }
            remap[old] = new;
        }
        let mut edges = Vec::new();
        for (new_u, &old_u) in nodes.iter().enumerate() {
            for &old_v in self.neighbors(old_u) {
                let new_v = remap[old_v];
                if new_v != usize::MAX && new_u < new_v {
                    edges.push((new_u, new_v));
                }
            }
        }
        let features = self.features.select(ndarray::Axis(0), nodes);
        let sensitive: Vec<usize> = nodes.iter().map(|&i| self.sensitive[i]).collect();
        let labels = self
            .labels
            .as_ref()
            .map(|l| nodes.iter().map(|&i| l[i]).collect());
        let pick = |m: &[bool]| nodes.iter().map(|&i| m[i]).collect::<Vec<_>>();
        let masks = NodeMasks {
            train: pick(&self.masks.train),
            val: pick(&self.masks.val),
            test: pick(&self.masks.test),
        };
        edges.sort_unstable();
        let (offsets, neighbors) = build_csr(nodes.len(), &edges);
        Ok(Graph {
            n: nodes.len(),
            edges,
            offsets,
            neighbors,
            features,
            sensitive,
            // sensitive value range of the parent is kept so model widths stay valid
            sensitive_count: self.sensitive_count,
            labels,
            masks,
        })
    }

    /// Checks every structural invariant. Cheap enough to call after any
    /// transformation in tests.
    pub fn validate(&self) -> Result<()> {
        if self.features.nrows() != self.n {
            return Err(Error::DimensionMismatch {
                context: "feature rows",
                expected: self.n,
                found: self.features.nrows(),
            });
        }
        if self.sensitive.len() != self.n {
            return Err(Error::DimensionMismatch {
                context: "sensitive",
                expected: self.n,
                found: self.sensitive.len(),
            });
        }
        if self.sensitive.iter().any(|&s| s >= self.sensitive_count) {
            return Err(Error::InvalidGraph("sensitive value out of range".into()));
        }
        for w in self.edges.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::InvalidGraph("edge list not canonical".into()));
            }
        }
        for &(u, v) in &self.edges {
            if u >= v || v >= self.n {
                return Err(Error::InvalidGraph(format!("bad edge ({u}, {v})")));
            }
            if !self.has_edge(u, v) || !self.has_edge(v, u) {
                return Err(Error::InvalidGraph("neighbor index out of sync".into()));
            }
        }
        validate_masks(&self.masks, self.n)
    }
}

fn build_csr(n: usize, edges: &[Edge]) -> (Vec<usize>, Vec<usize>) {
    let mut deg = vec![0usize; n];
    for &(u, v) in edges {
        deg[u] += 1;
        deg[v] += 1;
    }
    let mut offsets = vec![0usize; n + 1];
    for i in 0..n {
        offsets[i + 1] = offsets[i] + deg[i];
    }
    let mut fill = offsets.clone();
    let mut neighbors = vec![0usize; offsets[n]];
    for &(u, v) in edges {
        neighbors[fill[u]] = v;
        fill[u] += 1;
        neighbors[fill[v]] = u;
        fill[v] += 1;
    }
    for i in 0..n {
        neighbors[offsets[i]..offsets[i + 1]].sort_unstable();
    }
    (offsets, neighbors)
}

/// Returns `|S|`; the values must cover `0..|S|` without gaps.
fn validate_sensitive(sensitive: &[usize], n: usize) -> Result<usize> {
    if sensitive.len() != n {
        return Err(Error::DimensionMismatch {
            context: "sensitive",
            expected: n,
            found: sensitive.len(),
        });
    }
    let Some(&max) = sensitive.iter().max() else {
        return Ok(0);
    };
    let mut seen = vec![false; max + 1];
    for &s in sensitive {
        seen[s] = true;
    }
    if let Some(gap) = seen.iter().position(|&x| !x) {
        return Err(Error::InvalidGraph(format!(
            "sensitive values are not contiguous: {gap} missing from 0..={max}"
        )));
    }
    Ok(max + 1)
}

fn validate_masks(masks: &NodeMasks, n: usize) -> Result<()> {
    for (name, m) in [("train", &masks.train), ("val", &masks.val), ("test", &masks.test)] {
        if m.len() != n {
            return Err(Error::InvalidGraph(format!(
                "{name} mask has length {} for {n} nodes",
                m.len()
            )));
        }
    }
    for i in 0..n {
        let c = masks.train[i] as u8 + masks.val[i] as u8 + masks.test[i] as u8;
        if c > 1 {
            return Err(Error::InvalidGraph(format!("node {i} is in more than one split")));
        }
    }
    Ok(())
}
