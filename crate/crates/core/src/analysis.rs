//! How much sensitive information the original and fair views carry:
//! per-node sensitive homophily of the adjacency and Spearman correlation
//! of each feature with the sensitive attribute.

use std::collections::HashMap;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{minibatch_nodes, Graph};
use crate::models::{Adjacency, AugmentedView};

pub const HISTOGRAM_BINS: usize = 20;
/// Number of features compared by [`SpearmanReport::top_features`].
pub const TOP_FEATURES: usize = 10;
pub const HOMOPHILY_DEFINITION: &str =
    "fraction of a node's (weighted) neighbors sharing its sensitive value; degree-0 nodes excluded";

/// Homophily values of the non-isolated nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeHomophily {
    pub nodes: Vec<usize>,
    pub values: Vec<f64>,
    pub isolated: usize,
}

/// `sum_j A_ij [S_i = S_j] / sum_j A_ij` for every node with positive degree.
pub fn sensitive_homophily(adjacency: Adjacency<'_>, s: &[usize]) -> Result<NodeHomophily> {
    let n = s.len();
    let mut same = vec![0.0; n];
    let mut total = vec![0.0; n];
    let mut add = |a: usize, b: usize, w: f64| {
        total[a] += w;
        total[b] += w;
        if s[a] == s[b] {
            same[a] += w;
            same[b] += w;
        }
    };
    match adjacency {
        Adjacency::Graph(g) => {
            check_size(g.num_nodes(), n)?;
            for &(a, b) in g.edges() {
                add(a, b, 1.0);
            }
        }
        Adjacency::Weighted { pairs, weights } => {
            check_size(pairs.n, n)?;
            for ((a, b), &w) in pairs.iter().zip(weights) {
                if w != 0.0 {
                    add(a, b, w);
                }
            }
        }
    }
    let mut out = NodeHomophily {
        nodes: Vec::new(),
        values: Vec::new(),
        isolated: 0,
    };
    for i in 0..n {
        if total[i] > 0.0 {
            out.nodes.push(i);
            out.values.push(same[i] / total[i]);
        } else {
            out.isolated += 1;
        }
    }
    Ok(out)
}

fn check_size(adjacency: usize, s: usize) -> Result<()> {
    if adjacency != s {
        return Err(Error::DimensionMismatch {
            context: "adjacency vs sensitive attribute",
            expected: s,
            found: adjacency,
        });
    }
    Ok(())
}

/// Counts in `bins` equal-width bins over `[0, 1]`; 1.0 falls in the last.
pub fn histogram(values: &[f64], bins: usize) -> Vec<usize> {
    let mut h = vec![0; bins];
    for &v in values {
        let b = ((v * bins as f64) as usize).min(bins - 1);
        h[b] += 1;
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomophilySummary {
    pub values: Vec<f64>,
    pub isolated: usize,
    /// `NaN` when every node is isolated.
    pub mean: f64,
    pub histogram: Vec<usize>,
}

impl From<NodeHomophily> for HomophilySummary {
    fn from(h: NodeHomophily) -> Self {
        let mean = h.values.iter().sum::<f64>() / h.values.len() as f64;
        HomophilySummary {
            histogram: histogram(&h.values, HISTOGRAM_BINS),
            values: h.values,
            isolated: h.isolated,
            mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomophilyReport {
    pub original: HomophilySummary,
    pub fair: HomophilySummary,
    pub definition: String,
    pub bins: usize,
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(x: ArrayView1<'_, f64>) -> Vec<f64> {
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman correlation of one column with the sensitive attribute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureCorrelation {
    pub rho: f64,
    /// The column (or `S`) is constant; `rho` is reported as 0.
    pub constant: bool,
}

/// Spearman rho of every column of `x` against `s`.
pub fn spearman_sensitive(x: &Array2<f64>, s: &[usize]) -> Result<Vec<FeatureCorrelation>> {
    let n = s.len();
    if x.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: "spearman rows",
            expected: n,
            found: x.nrows(),
        });
    }
    if n < 3 {
        return Err(Error::OutOfRange {
            what: "spearman sample size",
            value: n.to_string(),
            range: ">= 3".into(),
        });
    }
    let sf = ndarray::Array1::from_iter(s.iter().map(|&v| v as f64));
    let rs = average_ranks(sf.view());
    Ok(x.columns()
        .into_iter()
        .map(|col| match pearson(&average_ranks(col), &rs) {
            Some(rho) => FeatureCorrelation { rho, constant: false },
            None => FeatureCorrelation { rho: 0.0, constant: true },
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpearmanReport {
    pub original: Vec<FeatureCorrelation>,
    pub fair: Vec<FeatureCorrelation>,
    /// Feature indices ordered by decreasing original `|rho|`, at most
    /// [`TOP_FEATURES`].
    pub top_features: Vec<usize>,
    /// How many of `top_features` have smaller `|rho|` in the fair view.
    pub reduced_in_fair: usize,
}

impl SpearmanReport {
    pub fn new(original: Vec<FeatureCorrelation>, fair: Vec<FeatureCorrelation>) -> Self {
        let mut order: Vec<usize> = (0..original.len()).collect();
        order.sort_by(|&a, &b| original[b].rho.abs().total_cmp(&original[a].rho.abs()).then(a.cmp(&b)));
        order.truncate(TOP_FEATURES);
        let reduced_in_fair = order
            .iter()
            .filter(|&&j| fair[j].rho.abs() < original[j].rho.abs())
            .count();
        SpearmanReport {
            original,
            fair,
            top_features: order,
            reduced_in_fair,
        }
    }
}

/// Everything recorded for one analysis run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim3Report {
    pub homophily: HomophilyReport,
    pub spearman: SpearmanReport,
    pub batch_size: Option<usize>,
    pub seed: u64,
    pub nodes_analyzed: usize,
}

/// Homophily and Spearman analyses of `graph` against its fair view.
///
/// With `batch_size`, both views are restricted to the same uniformly
/// sampled node set (the one [`crate::graph::minibatch_subgraph`] draws for
/// `seed`).
pub fn claim3_report(graph: &Graph, view: &AugmentedView, batch_size: Option<usize>, seed: u64) -> Result<Claim3Report> {
    let n = graph.num_nodes();
    if view.num_nodes() != n || view.masked_features.dim() != graph.features.dim() {
        return Err(Error::DimensionMismatch {
            context: "view vs graph",
            expected: n,
            found: view.num_nodes(),
        });
    }
    let (orig, fair_edges, fair_x) = match batch_size {
        None => (graph.clone(), view.sampled_edges(), view.masked_features.clone()),
        Some(size) => {
            let nodes = minibatch_nodes(n, size, seed)?;
            let local: HashMap<usize, usize> = nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();
            let edges = view
                .sampled_edges()
                .into_iter()
                .filter_map(|(a, b)| Some((*local.get(&a)?, *local.get(&b)?)))
                .collect();
            let x = view.masked_features.select(ndarray::Axis(0), &nodes);
            (graph.induced_subgraph(&nodes)?, edges, x)
        }
    };
    let fair = orig.with_edges(fair_edges)?;
    let homophily = HomophilyReport {
        original: sensitive_homophily(Adjacency::Graph(&orig), &orig.sensitive)?.into(),
        fair: sensitive_homophily(Adjacency::Graph(&fair), &orig.sensitive)?.into(),
        definition: HOMOPHILY_DEFINITION.into(),
        bins: HISTOGRAM_BINS,
    };
    let spearman = SpearmanReport::new(
        spearman_sensitive(&orig.features, &orig.sensitive)?,
        spearman_sensitive(&fair_x, &orig.sensitive)?,
    );
    Ok(Claim3Report {
        homophily,
        spearman,
        batch_size,
        seed,
        nodes_analyzed: orig.num_nodes(),
    })
}
