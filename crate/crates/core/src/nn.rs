//! Layers, parameter bookkeeping and the Adam optimizer.

use std::rc::Rc;

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autograd::{Gradients, Pairs, Tape, Var};
use crate::graph::Graph;
use crate::seed::Rng;

/// Affine map `x W + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array2<f64>,
}

impl Dense {
    /// Glorot-uniform weights, zero bias.
    pub fn new(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weight = Array2::from_shape_fn((inputs, outputs), |_| rng.random_range(-limit..limit));
        Dense {
            weight,
            bias: Array2::zeros((1, outputs)),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array2::zeros((1, outputs)),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundDense {
        BoundDense {
            weight: tape.param(self.weight.clone()),
            bias: tape.param(self.bias.clone()),
        }
    }

    /// Tape-free forward pass.
    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundDense {
    pub weight: Var,
    pub bias: Var,
}

impl BoundDense {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let h = tape.matmul(x, self.weight);
        tape.add_row(h, self.bias)
    }

    pub fn vars(&self) -> [Var; 2] {
        [self.weight, self.bias]
    }
}

/// Symmetrically normalized adjacency with self-loops,
/// `D^-1/2 (A + I) D^-1/2`, recorded on a tape as pair coefficients and a
/// diagonal.
#[derive(Debug, Clone)]
pub struct Propagator {
    pub pairs: Rc<Pairs>,
    pub coef: Var,
    pub diag: Var,
}

impl Propagator {
    /// Constant propagator for the edges of `graph`.
    pub fn from_graph(tape: &mut Tape, graph: &Graph) -> Self {
        let pairs = Rc::new(Pairs::new(graph.num_nodes(), graph.edges().iter().copied()));
        let deg: Vec<f64> = (0..graph.num_nodes())
            .map(|i| 1.0 + graph.degree(i) as f64)
            .collect();
        let coef = pairs
            .iter()
            .map(|(a, b)| 1.0 / (deg[a] * deg[b]).sqrt())
            .collect::<Vec<_>>();
        let diag = deg.iter().map(|d| 1.0 / d).collect::<Vec<_>>();
        let coef = tape.constant(Array2::from_shape_vec((pairs.len(), 1), coef).expect("shape"));
        let diag = tape.constant(Array2::from_shape_vec((pairs.n, 1), diag).expect("shape"));
        Propagator { pairs, coef, diag }
    }

    /// Differentiable propagator for edge weights `w` (an `m x 1` column
    /// aligned with `pairs`).
    pub fn from_weights(tape: &mut Tape, pairs: Rc<Pairs>, w: Var) -> Self {
        let deg = tape.scatter_pairs(w, pairs.clone());
        let deg = tape.shift(deg, 1.0);
        let c = tape.powf(deg, -0.5);
        let cc = tape.pair_product(c, pairs.clone());
        let coef = tape.mul(w, cc);
        let diag = tape.mul(c, c);
        Propagator { pairs, coef, diag }
    }

    pub fn propagate(&self, tape: &mut Tape, x: Var) -> Var {
        tape.spmm(self.coef, self.diag, x, self.pairs.clone())
    }
}

/// Two-layer graph convolution encoder: `A relu(A X W1 + b1) W2 + b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnEncoder {
    pub layers: Vec<Dense>,
}

impl GcnEncoder {
    pub fn new(inputs: usize, hidden: usize, outputs: usize, rng: &mut Rng) -> Self {
        GcnEncoder {
            layers: vec![Dense::new(inputs, hidden, rng), Dense::new(hidden, outputs, rng)],
        }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundGcn {
        BoundGcn {
            layers: self.layers.iter().map(|l| l.bind(tape)).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoundGcn {
    pub layers: Vec<BoundDense>,
}

impl BoundGcn {
    pub fn forward(&self, tape: &mut Tape, prop: &Propagator, x: Var) -> Var {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let xw = tape.matmul(h, layer.weight);
            let agg = prop.propagate(tape, xw);
            h = tape.add_row(agg, layer.bias);
            if i != last {
                h = tape.relu(h);
            }
        }
        h
    }

    pub fn vars(&self) -> Vec<Var> {
        self.layers.iter().flat_map(BoundDense::vars).collect()
    }
}

/// Multilayer perceptron with ReLU between layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    pub fn new(sizes: &[usize], rng: &mut Rng) -> Self {
        Mlp {
            layers: sizes.windows(2).map(|w| Dense::new(w[0], w[1], rng)).collect(),
        }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundMlp {
        BoundMlp {
            layers: self.layers.iter().map(|l| l.bind(tape)).collect(),
        }
    }

    /// Tape-free forward pass returning pre-activation outputs.
    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            h = l.apply(&h);
            if i != last {
                h.mapv_inplace(|v| v.max(0.0));
            }
        }
        h
    }
}

#[derive(Debug, Clone)]
pub struct BoundMlp {
    pub layers: Vec<BoundDense>,
}

impl BoundMlp {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            h = l.forward(tape, h);
            if i != last {
                h = tape.relu(h);
            }
        }
        h
    }

    pub fn vars(&self) -> Vec<Var> {
        self.layers.iter().flat_map(BoundDense::vars).collect()
    }
}

/// Read/write access to a model's arrays in a fixed order, with stable names
/// for checkpoints.
pub trait Parameters {
    fn named_params(&self) -> Vec<(String, &Array2<f64>)>;
    fn params_mut(&mut self) -> Vec<&mut Array2<f64>>;
}

fn dense_named<'a>(prefix: &str, d: &'a Dense, out: &mut Vec<(String, &'a Array2<f64>)>) {
    out.push((format!("{prefix}.weight"), &d.weight));
    out.push((format!("{prefix}.bias"), &d.bias));
}

impl Parameters for Dense {
    fn named_params(&self) -> Vec<(String, &Array2<f64>)> {
        let mut v = Vec::new();
        dense_named("", self, &mut v);
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

pub(crate) fn layers_named<'a>(prefix: &str, layers: &'a [Dense]) -> Vec<(String, &'a Array2<f64>)> {
    let mut v = Vec::new();
    for (i, l) in layers.iter().enumerate() {
        dense_named(&format!("{prefix}.{i}"), l, &mut v);
    }
    v
}

pub(crate) fn layers_mut(layers: &mut [Dense]) -> Vec<&mut Array2<f64>> {
    layers
        .iter_mut()
        .flat_map(|l| [&mut l.weight, &mut l.bias])
        .collect()
}

impl Parameters for Mlp {
    fn named_params(&self) -> Vec<(String, &Array2<f64>)> {
        layers_named("mlp", &self.layers)
    }
    fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        layers_mut(&mut self.layers)
    }
}

/// Adam hyperparameters. `weight_decay` is added to the gradient as an L2
/// term before the moment updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamConfig {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Array2<f64>>,
    pub v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// One update of `params` with `grads` (same order and shapes).
    pub fn step(&mut self, params: Vec<&mut Array2<f64>>, grads: &[Array2<f64>]) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient count");
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Array2::zeros(p.dim())).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for (k, p) in params.into_iter().enumerate() {
            let g = &grads[k];
            let m = &mut self.m[k];
            let v = &mut self.v[k];
            ndarray::Zip::from(&mut **p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    let g = g + c.weight_decay * *p;
                    *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                    *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *p -= c.lr * mhat / (vhat.sqrt() + c.eps);
                });
        }
    }
}

/// Gradients for `vars` in order, zeros where unreachable.
pub fn collect_grads(tape: &Tape, grads: &Gradients, vars: &[Var]) -> Vec<Array2<f64>> {
    vars.iter()
        .map(|&v| grads.get_or_zeros(v, tape.shape(v)))
        .collect()
}
