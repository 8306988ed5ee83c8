//! Augmentation model `g` (encoder, edge perturbation head, feature mask
//! head), representation encoder `f` and sensitive-attribute adversary `k`.

use std::rc::Rc;

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autograd::{Pairs, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{split::sample_non_edges, Edge, Graph};
use crate::nn::{layers_mut, layers_named, BoundDense, BoundGcn, BoundMlp, Dense, GcnEncoder, Mlp, Parameters, Propagator};
use crate::seed::Rng;

/// Architecture hyperparameters shared by `g`, `f` and `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden: usize,
    /// Width of the representations produced by `f`.
    pub embedding: usize,
    pub adversary_hidden: usize,
    /// Relaxed-Bernoulli temperature.
    pub temperature: f64,
    /// Above this node count the edge head scores only existing edges plus
    /// as many sampled non-edges, instead of every pair.
    pub dense_threshold: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 128,
            embedding: 128,
            adversary_hidden: 128,
            temperature: 1.0,
            dense_threshold: 5_000,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::Config(format!("temperature must be > 0, got {}", self.temperature)));
        }
        if self.hidden == 0 || self.embedding == 0 || self.adversary_hidden == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }
}

/// Parameters of the augmentation model `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentorParams {
    pub encoder: GcnEncoder,
    /// Transform applied before the pairwise inner product.
    pub edge_head: Dense,
    /// Scalar offset added to every edge logit (`1 x 1`).
    pub edge_bias: Array2<f64>,
    /// Per-node MLP producing one mask logit per feature.
    pub mask_head: Mlp,
    pub temperature: f64,
}

impl AugmentorParams {
    pub fn new(features: usize, cfg: &ModelConfig, rng: &mut Rng) -> Self {
        let h = cfg.hidden;
        AugmentorParams {
            encoder: GcnEncoder::new(features, h, h, rng),
            edge_head: Dense::new(h, h, rng),
            edge_bias: Array2::zeros((1, 1)),
            mask_head: Mlp::new(&[h, h, features], rng),
            temperature: cfg.temperature,
        }
    }

    pub fn features(&self) -> usize {
        self.encoder.inputs()
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundAugmentor {
        BoundAugmentor {
            encoder: self.encoder.bind(tape),
            edge_head: self.edge_head.bind(tape),
            edge_bias: tape.param(self.edge_bias.clone()),
            mask_head: self.mask_head.bind(tape),
            temperature: self.temperature,
        }
    }
}

impl Parameters for AugmentorParams {
    fn named_params(&self) -> Vec<(String, &Array2<f64>)> {
        let mut v = layers_named("g.encoder", &self.encoder.layers);
        v.push(("g.edge_head.weight".into(), &self.edge_head.weight));
        v.push(("g.edge_head.bias".into(), &self.edge_head.bias));
        v.push(("g.edge_bias".into(), &self.edge_bias));
        v.extend(layers_named("g.mask_head", &self.mask_head.layers));
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut v = layers_mut(&mut self.encoder.layers);
        v.push(&mut self.edge_head.weight);
        v.push(&mut self.edge_head.bias);
        v.push(&mut self.edge_bias);
        v.extend(layers_mut(&mut self.mask_head.layers));
        v
    }
}

#[derive(Debug, Clone)]
pub struct BoundAugmentor {
    pub encoder: BoundGcn,
    pub edge_head: BoundDense,
    pub edge_bias: Var,
    pub mask_head: BoundMlp,
    pub temperature: f64,
}

impl BoundAugmentor {
    /// Variables in the order of [`AugmentorParams::params_mut`].
    pub fn vars(&self) -> Vec<Var> {
        let mut v = self.encoder.vars();
        v.extend(self.edge_head.vars());
        v.push(self.edge_bias);
        v.extend(self.mask_head.vars());
        v
    }
}

/// Parameters of the representation encoder `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub encoder: GcnEncoder,
}

impl EncoderParams {
    pub fn new(features: usize, cfg: &ModelConfig, rng: &mut Rng) -> Self {
        EncoderParams {
            encoder: GcnEncoder::new(features, cfg.hidden, cfg.embedding, rng),
        }
    }

    pub fn embedding(&self) -> usize {
        self.encoder.outputs()
    }
}

impl Parameters for EncoderParams {
    fn named_params(&self) -> Vec<(String, &Array2<f64>)> {
        layers_named("f.encoder", &self.encoder.layers)
    }
    fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        layers_mut(&mut self.encoder.layers)
    }
}

/// Parameters of the adversary `k`: embedding to `|S|` class scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryParams {
    pub mlp: Mlp,
}

impl AdversaryParams {
    pub fn new(embedding: usize, groups: usize, cfg: &ModelConfig, rng: &mut Rng) -> Self {
        AdversaryParams {
            mlp: Mlp::new(&[embedding, cfg.adversary_hidden, groups], rng),
        }
    }

    pub fn groups(&self) -> usize {
        self.mlp.outputs()
    }
}

impl Parameters for AdversaryParams {
    fn named_params(&self) -> Vec<(String, &Array2<f64>)> {
        layers_named("k.mlp", &self.mlp.layers)
    }
    fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        layers_mut(&mut self.mlp.layers)
    }
}

/// The three parameter groups trained together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSet {
    pub augmentor: AugmentorParams,
    pub encoder: EncoderParams,
    pub adversary: AdversaryParams,
}

impl ModelSet {
    /// Freshly initialized `g`, `f` and `k` for `features` input columns and
    /// `groups` sensitive values.
    pub fn new(features: usize, groups: usize, cfg: &ModelConfig, rng: &mut Rng) -> Self {
        let augmentor = AugmentorParams::new(features, cfg, rng);
        let encoder = EncoderParams::new(features, cfg, rng);
        let adversary = AdversaryParams::new(cfg.embedding, groups, cfg, rng);
        ModelSet {
            augmentor,
            encoder,
            adversary,
        }
    }

    /// Rebinds `g`, `f` and `k` to existing tape variables given in
    /// [`Parameters::named_params`] order, for differentiating with respect
    /// to externally supplied values.
    pub fn bind_vars(&self, vars: &[Var]) -> (BoundAugmentor, BoundGcn, BoundMlp) {
        assert_eq!(vars.len(), self.named_params().len(), "one variable per parameter");
        let mut it = vars.iter().copied();
        let encoder = BoundGcn { layers: take_dense(&mut it, self.augmentor.encoder.layers.len()) };
        let edge_head = take_dense(&mut it, 1).remove(0);
        let edge_bias = it.next().expect("counted");
        let mask_head = BoundMlp { layers: take_dense(&mut it, self.augmentor.mask_head.layers.len()) };
        let f = BoundGcn { layers: take_dense(&mut it, self.encoder.encoder.layers.len()) };
        let k = BoundMlp { layers: take_dense(&mut it, self.adversary.mlp.layers.len()) };
        let g = BoundAugmentor {
            encoder,
            edge_head,
            edge_bias,
            mask_head,
            temperature: self.augmentor.temperature,
        };
        (g, f, k)
    }
}

impl Parameters for ModelSet {
    fn named_params(&self) -> Vec<(String, &Array2<f64>)> {
        let mut v = self.augmentor.named_params();
        v.extend(self.encoder.named_params());
        v.extend(self.adversary.named_params());
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut v = self.augmentor.params_mut();
        v.extend(self.encoder.params_mut());
        v.extend(self.adversary.params_mut());
        v
    }
}

fn take_dense(it: &mut impl Iterator<Item = Var>, count: usize) -> Vec<BoundDense> {
    (0..count)
        .map(|_| BoundDense {
            weight: it.next().expect("counted"),
            bias: it.next().expect("counted"),
        })
        .collect()
}

/// How relaxed Bernoulli samples enter the forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sampling {
    /// Hard 0/1 samples forward, relaxed gradient backward.
    StraightThrough,
    /// Relaxed samples forward and backward; smooth in the parameters.
    Relaxed,
}

/// Candidate pairs scored by the edge head plus the logistic noise used for
/// one relaxed Bernoulli draw of edges and feature masks.
#[derive(Debug, Clone)]
pub struct AugNoise {
    pub pairs: Rc<Pairs>,
    /// `1` where the pair is an edge of the input graph.
    pub targets: Array2<f64>,
    pub edge_noise: Array2<f64>,
    pub mask_noise: Array2<f64>,
    /// Whether the candidate set is all pairs.
    pub dense: bool,
}

fn logistic(rng: &mut Rng) -> f64 {
    let u: f64 = rng.random_range(f64::EPSILON..1.0);
    u.ln() - (1.0 - u).ln()
}

impl AugNoise {
    /// Draws the candidate set and noise for `graph`.
    pub fn draw(graph: &Graph, dense_threshold: usize, rng: &mut Rng) -> Self {
        let n = graph.num_nodes();
        let dense = n <= dense_threshold;
        let pairs = if dense {
            Pairs::complete(n)
        } else {
            let available = n * (n - 1) / 2 - graph.num_edges();
            let k = graph.num_edges().min(available);
            let mut cand: Vec<Edge> = graph.edges().to_vec();
            cand.extend(sample_non_edges(graph, k, rng));
            Pairs::new(n, cand)
        };
        let targets = Array2::from_shape_fn((pairs.len(), 1), |(e, _)| {
            f64::from(u8::from(graph.has_edge(pairs.src[e], pairs.dst[e])))
        });
        let edge_noise = Array2::from_shape_fn((pairs.len(), 1), |_| logistic(rng));
        let mask_noise = Array2::from_shape_fn((n, graph.num_features()), |_| logistic(rng));
        AugNoise {
            pairs: Rc::new(pairs),
            targets,
            edge_noise,
            mask_noise,
            dense,
        }
    }
}

/// Which augmentation components are replaced by the identity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    /// Without edge perturbation: `A' = A`.
    pub no_edge_perturbation: bool,
    /// Without feature masking: `X' = X`.
    pub no_feature_masking: bool,
}

/// Tape handles for one augmentation forward pass.
#[derive(Debug, Clone)]
pub struct AugmentTape {
    pub z: Var,
    pub pairs: Rc<Pairs>,
    pub targets: Var,
    pub edge_probs: Var,
    pub edge_weights: Var,
    pub mask_probs: Var,
    pub x_aug: Var,
}

fn relaxed_bernoulli(t: &mut Tape, probs: Var, noise: &Array2<f64>, temperature: f64, sampling: Sampling) -> Var {
    let lg = t.logit_clamped(probs, crate::losses::EPS);
    let noise = t.constant(noise.clone());
    let y = t.add(lg, noise);
    let y = t.scale(y, 1.0 / temperature);
    let soft = t.sigmoid(y);
    match sampling {
        Sampling::StraightThrough => t.straight_through(soft),
        Sampling::Relaxed => soft,
    }
}

/// Records `g` on the tape: embeddings from `g_enc` on the input graph, then
/// edge perturbation over the candidate pairs and feature masking.
pub fn augment_on_tape(
    t: &mut Tape,
    g: &BoundAugmentor,
    prop: &Propagator,
    x: Var,
    noise: &AugNoise,
    ablation: Ablation,
    sampling: Sampling,
) -> AugmentTape {
    let z = g.encoder.forward(t, prop, x);
    let targets = t.constant(noise.targets.clone());
    let (edge_probs, edge_weights) = if ablation.no_edge_perturbation {
        (targets, targets)
    } else {
        let tz = g.edge_head.forward(t, z);
        let logits = t.pair_dot(tz, noise.pairs.clone());
        let logits = t.add_row(logits, g.edge_bias);
        let probs = t.sigmoid(logits);
        let w = relaxed_bernoulli(t, probs, &noise.edge_noise, g.temperature, sampling);
        (probs, w)
    };
    let (mask_probs, x_aug) = if ablation.no_feature_masking {
        let ones = t.constant(Array2::ones(t.shape(x)));
        (ones, x)
    } else {
        let logits = g.mask_head.forward(t, z);
        let probs = t.sigmoid(logits);
        let mask = relaxed_bernoulli(t, probs, &noise.mask_noise, g.temperature, sampling);
        (probs, t.mul(x, mask))
    };
    AugmentTape {
        z,
        pairs: noise.pairs.clone(),
        targets,
        edge_probs,
        edge_weights,
        mask_probs,
        x_aug,
    }
}

/// Plain-value result of one augmentation, `G' = {A', X', S}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedView {
    pub pairs: Rc<Pairs>,
    /// Edge probabilities on `pairs`; every other pair has probability 0.
    pub edge_probs: Vec<f64>,
    /// Sampled `A'` on `pairs` (0/1 under straight-through sampling).
    pub sampled: Vec<f64>,
    pub mask_probs: Array2<f64>,
    pub masked_features: Array2<f64>,
}

impl AugmentedView {
    pub fn num_nodes(&self) -> usize {
        self.pairs.n
    }

    pub fn sampled_edges(&self) -> Vec<Edge> {
        self.pairs
            .iter()
            .zip(&self.sampled)
            .filter_map(|(p, &w)| (w > 0.5).then_some(p))
            .collect()
    }

    /// `G'` as a graph carrying the original sensitive attribute, labels and
    /// masks.
    pub fn sampled_graph(&self, original: &Graph) -> Result<Graph> {
        let mut g = original.with_edges(self.sampled_edges())?;
        g.features = self.masked_features.clone();
        Ok(g)
    }

    pub fn dense_edge_probs(&self) -> Array2<f64> {
        self.dense(&self.edge_probs)
    }

    pub fn dense_sampled_adjacency(&self) -> Array2<f64> {
        self.dense(&self.sampled)
    }

    fn dense(&self, vals: &[f64]) -> Array2<f64> {
        let n = self.pairs.n;
        let mut m = Array2::zeros((n, n));
        for ((a, b), &v) in self.pairs.iter().zip(vals) {
            m[[a, b]] = v;
            m[[b, a]] = v;
        }
        m
    }

    fn from_tape(t: &Tape, a: &AugmentTape) -> Self {
        AugmentedView {
            pairs: a.pairs.clone(),
            edge_probs: t.value(a.edge_probs).column(0).to_vec(),
            sampled: t.value(a.edge_weights).column(0).to_vec(),
            mask_probs: t.value(a.mask_probs).clone(),
            masked_features: t.value(a.x_aug).clone(),
        }
    }
}

fn check_features(graph: &Graph, expected: usize) -> Result<()> {
    if graph.num_features() != expected {
        return Err(Error::DimensionMismatch {
            context: "feature width",
            expected,
            found: graph.num_features(),
        });
    }
    Ok(())
}

/// Embeddings `Z` of `g_enc` on `graph`.
pub fn encode(params: &AugmentorParams, graph: &Graph) -> Result<Array2<f64>> {
    check_features(graph, params.features())?;
    let mut t = Tape::new();
    let enc = params.encoder.bind(&mut t);
    let prop = Propagator::from_graph(&mut t, graph);
    let x = t.constant(graph.features.clone());
    let z = enc.forward(&mut t, &prop, x);
    Ok(t.value(z).clone())
}

fn check_rows(z: &Array2<f64>, graph: &Graph) -> Result<()> {
    if z.nrows() != graph.num_nodes() {
        return Err(Error::DimensionMismatch {
            context: "embedding rows",
            expected: graph.num_nodes(),
            found: z.nrows(),
        });
    }
    Ok(())
}

/// Edge probabilities on the candidate pairs and a straight-through sample
/// of `A'`, given embeddings `z`.
pub fn perturb_edges(
    params: &AugmentorParams,
    z: &Array2<f64>,
    graph: &Graph,
    dense_threshold: usize,
    rng: &mut Rng,
) -> Result<(Rc<Pairs>, Vec<f64>, Vec<f64>)> {
    check_rows(z, graph)?;
    let noise = AugNoise::draw(graph, dense_threshold, rng);
    let mut t = Tape::new();
    let head = params.edge_head.bind(&mut t);
    let bias = t.constant(params.edge_bias.clone());
    let zv = t.constant(z.clone());
    let tz = head.forward(&mut t, zv);
    let logits = t.pair_dot(tz, noise.pairs.clone());
    let logits = t.add_row(logits, bias);
    let probs = t.sigmoid(logits);
    let w = relaxed_bernoulli(&mut t, probs, &noise.edge_noise, params.temperature, Sampling::StraightThrough);
    Ok((
        noise.pairs.clone(),
        t.value(probs).column(0).to_vec(),
        t.value(w).column(0).to_vec(),
    ))
}

/// Mask probabilities and masked features `X' = X * mask`, given
/// embeddings `z`.
pub fn mask_features(
    params: &AugmentorParams,
    z: &Array2<f64>,
    graph: &Graph,
    rng: &mut Rng,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_rows(z, graph)?;
    check_features(graph, params.features())?;
    let noise = Array2::from_shape_fn(graph.features.dim(), |_| logistic(rng));
    let mut t = Tape::new();
    let head = params.mask_head.bind(&mut t);
    let zv = t.constant(z.clone());
    let logits = head.forward(&mut t, zv);
    let probs = t.sigmoid(logits);
    let mask = relaxed_bernoulli(&mut t, probs, &noise, params.temperature, Sampling::StraightThrough);
    let x = t.constant(graph.features.clone());
    let x_aug = t.mul(x, mask);
    Ok((t.value(probs).clone(), t.value(x_aug).clone()))
}

/// Full augmentation `G -> G'` honoring the ablation flags.
pub fn augment(
    params: &AugmentorParams,
    graph: &Graph,
    dense_threshold: usize,
    rng: &mut Rng,
    ablation: Ablation,
) -> Result<AugmentedView> {
    check_features(graph, params.features())?;
    let noise = AugNoise::draw(graph, dense_threshold, rng);
    Ok(augment_with_noise(params, graph, &noise, ablation, Sampling::StraightThrough))
}

/// Deterministic augmentation for pre-drawn noise.
pub fn augment_with_noise(
    params: &AugmentorParams,
    graph: &Graph,
    noise: &AugNoise,
    ablation: Ablation,
    sampling: Sampling,
) -> AugmentedView {
    let mut t = Tape::new();
    let g = params.bind(&mut t);
    let prop = Propagator::from_graph(&mut t, graph);
    let x = t.constant(graph.features.clone());
    let a = augment_on_tape(&mut t, &g, &prop, x, noise, ablation, sampling);
    AugmentedView::from_tape(&t, &a)
}

/// Adjacency accepted by [`represent`].
#[derive(Debug, Clone, Copy)]
pub enum Adjacency<'a> {
    Graph(&'a Graph),
    Weighted { pairs: &'a Rc<Pairs>, weights: &'a [f64] },
}

/// Representations `H = f(A, X)`.
pub fn represent(params: &EncoderParams, adjacency: Adjacency<'_>, features: &Array2<f64>) -> Result<Array2<f64>> {
    if features.ncols() != params.encoder.inputs() {
        return Err(Error::DimensionMismatch {
            context: "feature width",
            expected: params.encoder.inputs(),
            found: features.ncols(),
        });
    }
    let mut t = Tape::new();
    let prop = match adjacency {
        Adjacency::Graph(g) => {
            if g.num_nodes() != features.nrows() {
                return Err(Error::DimensionMismatch {
                    context: "adjacency size",
                    expected: features.nrows(),
                    found: g.num_nodes(),
                });
            }
            Propagator::from_graph(&mut t, g)
        }
        Adjacency::Weighted { pairs, weights } => {
            if pairs.n != features.nrows() || weights.len() != pairs.len() {
                return Err(Error::DimensionMismatch {
                    context: "adjacency size",
                    expected: features.nrows(),
                    found: pairs.n,
                });
            }
            let w = t.constant(Array2::from_shape_vec((weights.len(), 1), weights.to_vec()).expect("shape"));
            Propagator::from_weights(&mut t, pairs.clone(), w)
        }
    };
    let enc = params.encoder.bind(&mut t);
    let x = t.constant(features.clone());
    let h = enc.forward(&mut t, &prop, x);
    Ok(t.value(h).clone())
}

/// `H'` of an augmented view.
pub fn represent_view(params: &EncoderParams, view: &AugmentedView) -> Result<Array2<f64>> {
    represent(
        params,
        Adjacency::Weighted {
            pairs: &view.pairs,
            weights: &view.sampled,
        },
        &view.masked_features,
    )
}

/// Class probabilities of the adversary for each row of `h`.
pub fn adversary_predict(params: &AdversaryParams, h: &Array2<f64>) -> Result<Array2<f64>> {
    if h.ncols() != params.mlp.inputs() {
        return Err(Error::DimensionMismatch {
            context: "adversary input width",
            expected: params.mlp.inputs(),
            found: h.ncols(),
        });
    }
    let mut logits = params.mlp.apply(h);
    for mut r in logits.rows_mut() {
        let max = r.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        r.mapv_inplace(|x| (x - max).exp());
        let s = r.sum();
        r /= s;
    }
    Ok(logits)
}
