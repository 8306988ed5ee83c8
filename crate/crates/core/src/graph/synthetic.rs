//! Planted-bias block graphs for controlled debiasing experiments.

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{node_split, Graph, SplitRatios};
use crate::error::Result;
use crate::seed::derive_rng;

/// Two-or-more block stochastic block model where the block is the
/// sensitive attribute.
///
/// Feature 0 equals the block id plus Gaussian noise; the remaining
/// features are standard normal. The binary label depends on feature 1 and
/// on the block, so a classifier that uses sensitive information shows a
/// demographic parity gap.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedBias {
    pub nodes: usize,
    pub blocks: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    pub features: usize,
    pub leak_noise: f64,
    /// Weight of the block in the label rule.
    pub label_bias: f64,
}

impl Default for PlantedBias {
    fn default() -> Self {
        PlantedBias {
            nodes: 200,
            blocks: 2,
            p_intra: 0.1,
            p_inter: 0.01,
            features: 8,
            leak_noise: 0.2,
            label_bias: 1.0,
        }
    }
}

impl PlantedBias {
    pub fn generate(&self, seed: u64) -> Result<Graph> {
        let n = self.nodes;
        let mut rng = derive_rng(seed, "planted_bias");
        let sensitive: Vec<usize> = (0..n).map(|i| i * self.blocks / n).collect();
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                let p = if sensitive[u] == sensitive[v] {
                    self.p_intra
                } else {
                    self.p_inter
                };
                if rng.random::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }
        let d = self.features.max(2);
        let mut x = Array2::<f64>::zeros((n, d));
        for i in 0..n {
            for j in 0..d {
                let z: f64 = StandardNormal.sample(&mut rng);
                x[[i, j]] = if j == 0 {
                    sensitive[i] as f64 + self.leak_noise * z
                } else {
                    z
                };
            }
        }
        let centre = (self.blocks as f64 - 1.0) / 2.0;
        let labels: Vec<i64> = (0..n)
            .map(|i| {
                let z: f64 = StandardNormal.sample(&mut rng);
                let score = x[[i, 1]] + self.label_bias * (sensitive[i] as f64 - centre) + 0.3 * z;
                i64::from(score > 0.0)
            })
            .collect();
        let g = Graph::new(x, edges, sensitive, Some(labels))?;
        let masks = node_split(&g, SplitRatios::NODE_DEFAULT, seed)?;
        g.with_masks(masks)
    }
}
