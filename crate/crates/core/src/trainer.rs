//! Alternating min–max training: the adversary `k` ascends the adversarial
//! loss, then `g` and `f` descend the weighted objective with `k` frozen.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::rc::Rc;
use std::time::Instant;

use log::{debug, info};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::autograd::{Tape, Var};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::losses::{self, total_loss, LossBreakdown, LossWeights};
use crate::models::{
    augment_on_tape, Ablation, AdversaryParams, AugNoise, AugmentTape, AugmentedView, BoundAugmentor, ModelConfig,
    ModelSet, Sampling,
};
use crate::nn::{collect_grads, Adam, AdamConfig, BoundGcn, BoundMlp, Parameters, Propagator};
use crate::seed::{derive_rng, Rng};

/// Each unordered candidate pair stands for both `(i, j)` and `(j, i)` of
/// the reconstruction double sum.
pub const PAIR_MULTIPLICITY: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub model_lr: f64,
    pub model_weight_decay: f64,
    pub loss_weights: LossWeights,
    pub ablate_ep: bool,
    pub ablate_fm: bool,
    pub seed: u64,
    pub adversary_steps_per_epoch: usize,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            model_lr: 1e-4,
            model_weight_decay: 1e-5,
            loss_weights: LossWeights::default(),
            ablate_ep: false,
            ablate_fm: false,
            seed: 0,
            adversary_steps_per_epoch: 1,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be > 0".into()));
        }
        if !(self.model_lr > 0.0 && self.model_lr.is_finite()) {
            return Err(Error::Config(format!("model_lr must be > 0, got {}", self.model_lr)));
        }
        if !(self.model_weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "model_weight_decay must be >= 0, got {}",
                self.model_weight_decay
            )));
        }
        self.loss_weights.validate()?;
        self.model.validate()
    }

    pub fn ablation(&self) -> Ablation {
        Ablation {
            no_edge_perturbation: self.ablate_ep,
            no_feature_masking: self.ablate_fm,
        }
    }

    /// Epochs at which a checkpoint is written: every tenth of the budget
    /// and the last epoch.
    pub fn checkpoint_epochs(&self) -> Vec<usize> {
        let every = (self.epochs / 10).max(1);
        let mut v: Vec<usize> = (1..=self.epochs).filter(|e| e % every == 0).collect();
        if v.last() != Some(&self.epochs) {
            v.push(self.epochs);
        }
        v
    }
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub models: ModelSet,
    pub opt_augmentor: Adam,
    pub opt_encoder: Adam,
    pub opt_adversary: Adam,
    /// Completed epochs.
    pub epoch: usize,
    pub rng: Rng,
    pub history: Vec<LossBreakdown>,
    /// Per epoch: the adversarial loss before each inner adversary step and
    /// after the last one.
    pub adversary_trace: Vec<Vec<f64>>,
}

impl TrainState {
    pub fn new(graph: &Graph, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let models = ModelSet::new(
            graph.num_features(),
            graph.sensitive_count,
            &config.model,
            &mut derive_rng(config.seed, "init"),
        );
        let opt = Adam::new(AdamConfig::new(config.model_lr, config.model_weight_decay));
        Ok(TrainState {
            models,
            opt_augmentor: opt.clone(),
            opt_encoder: opt.clone(),
            opt_adversary: opt,
            epoch: 0,
            rng: derive_rng(config.seed, "train"),
            history: Vec::new(),
            adversary_trace: Vec::new(),
        })
    }

    fn check_graph(&self, graph: &Graph) -> Result<()> {
        let want = self.models.augmentor.features();
        if graph.num_features() != want {
            return Err(Error::DimensionMismatch {
                context: "feature width",
                expected: want,
                found: graph.num_features(),
            });
        }
        if graph.sensitive_count > self.models.adversary.groups() {
            return Err(Error::DimensionMismatch {
                context: "sensitive groups",
                expected: self.models.adversary.groups(),
                found: graph.sensitive_count,
            });
        }
        Ok(())
    }
}

/// Class probabilities of `k` on the tape.
pub fn adversary_probs(t: &mut Tape, k: &BoundMlp, h: Var) -> Var {
    let logits = k.forward(t, h);
    t.softmax_rows(logits)
}

/// Tape handles for both views and their representations.
#[derive(Debug, Clone)]
pub struct Views {
    pub x: Var,
    pub aug: AugmentTape,
    pub h: Var,
    pub h_aug: Var,
}

/// Records `g`, then `f` on the original and augmented graphs.
pub fn views_on_tape(
    t: &mut Tape,
    g: &BoundAugmentor,
    f: &BoundGcn,
    graph: &Graph,
    noise: &AugNoise,
    ablation: Ablation,
    sampling: Sampling,
) -> Views {
    let prop = Propagator::from_graph(t, graph);
    let x = t.constant(graph.features.clone());
    let aug = augment_on_tape(t, g, &prop, x, noise, ablation, sampling);
    let h = f.forward(t, &prop, x);
    let aug_prop = Propagator::from_weights(t, aug.pairs.clone(), aug.edge_weights);
    let h_aug = f.forward(t, &aug_prop, aug.x_aug);
    Views { x, aug, h, h_aug }
}

/// Loss components and the weighted total for recorded views.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveVars {
    pub adv: Var,
    pub con: Var,
    pub reconst: Var,
    pub total: Var,
}

pub fn objective_on_tape(
    t: &mut Tape,
    views: &Views,
    k: &BoundMlp,
    sensitive: Rc<Vec<usize>>,
    w: &LossWeights,
) -> ObjectiveVars {
    let probs = adversary_probs(t, k, views.h_aug);
    let adv = losses::tape::adversarial(t, probs, sensitive);
    let con = losses::tape::contrastive(t, views.h, views.h_aug, w.tau);
    let reconst = losses::tape::reconstruction(
        t,
        views.aug.edge_probs,
        views.aug.targets,
        PAIR_MULTIPLICITY,
        views.x,
        views.aug.x_aug,
        w.lambda,
    );
    let a = t.scale(adv, w.alpha);
    let c = t.scale(con, w.beta);
    let r = t.scale(reconst, w.gamma);
    let ac = t.add(a, c);
    let total = t.add(ac, r);
    ObjectiveVars {
        adv,
        con,
        reconst,
        total,
    }
}

/// One ascent step of `k` on `L_adv` for fixed representations `h`.
/// Returns the loss before the step.
pub fn adversary_step(adversary: &mut AdversaryParams, opt: &mut Adam, h: &Array2<f64>, sensitive: &Rc<Vec<usize>>) -> f64 {
    let mut t = Tape::new();
    let k = adversary.mlp.bind(&mut t);
    let hv = t.constant(h.clone());
    let probs = adversary_probs(&mut t, &k, hv);
    let adv = losses::tape::adversarial(&mut t, probs, sensitive.clone());
    let before = t.scalar_value(adv);
    let neg = t.scale(adv, -1.0);
    let grads = t.backward(neg);
    let g = collect_grads(&t, &grads, &k.vars());
    opt.step(adversary.params_mut(), &g);
    before
}

/// Losses and optional view of one epoch.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub loss: LossBreakdown,
    pub adversary_trace: Vec<f64>,
    pub view: Option<AugmentedView>,
}

/// One epoch: `adversary_steps_per_epoch` ascent steps on `k` against the
/// current `H'`, then one descent step on `(g, f)` with `k` fixed.
pub fn train_step(state: &mut TrainState, graph: &Graph, config: &TrainConfig) -> Result<StepReport> {
    step(state, graph, config, false)
}

/// As [`train_step`], also returning the sampled view of this epoch.
pub fn train_step_with_view(state: &mut TrainState, graph: &Graph, config: &TrainConfig) -> Result<StepReport> {
    step(state, graph, config, true)
}

fn step(state: &mut TrainState, graph: &Graph, config: &TrainConfig, keep_view: bool) -> Result<StepReport> {
    state.check_graph(graph)?;
    let epoch = state.epoch + 1;
    let noise = AugNoise::draw(graph, config.model.dense_threshold, &mut state.rng);
    let sensitive = Rc::new(graph.sensitive.clone());

    let mut t = Tape::new();
    let g = state.models.augmentor.bind(&mut t);
    let f = state.models.encoder.encoder.bind(&mut t);
    let views = views_on_tape(&mut t, &g, &f, graph, &noise, config.ablation(), Sampling::StraightThrough);

    // The tape only appends, so k can be updated on a detached copy of H'
    // before its forward pass is recorded here.
    let h_aug = t.value(views.h_aug).clone();
    let mut trace = Vec::with_capacity(config.adversary_steps_per_epoch + 1);
    for _ in 0..config.adversary_steps_per_epoch {
        trace.push(adversary_step(
            &mut state.models.adversary,
            &mut state.opt_adversary,
            &h_aug,
            &sensitive,
        ));
    }

    let k = state.models.adversary.mlp.bind(&mut t);
    let obj = objective_on_tape(&mut t, &views, &k, sensitive, &config.loss_weights);
    let loss = total_loss(
        &config.loss_weights,
        t.scalar_value(obj.adv),
        t.scalar_value(obj.con),
        t.scalar_value(obj.reconst),
    )
    .map_err(|e| match e {
        Error::NonFiniteLoss { detail, .. } => Error::NonFiniteLoss { epoch, detail },
        other => other,
    })?;
    trace.push(loss.adv);

    let grads = t.backward(obj.total);
    let gg = collect_grads(&t, &grads, &g.vars());
    let gf = collect_grads(&t, &grads, &f.vars());
    if gg.iter().chain(&gf).any(|a| a.iter().any(|x| !x.is_finite())) {
        return Err(Error::NonFiniteLoss {
            epoch,
            detail: "non-finite gradient".into(),
        });
    }
    state.opt_augmentor.step(state.models.augmentor.params_mut(), &gg);
    state.opt_encoder.step(state.models.encoder.params_mut(), &gf);

    let view = keep_view.then(|| AugmentedView {
        pairs: views.aug.pairs.clone(),
        edge_probs: t.value(views.aug.edge_probs).column(0).to_vec(),
        sampled: t.value(views.aug.edge_weights).column(0).to_vec(),
        mask_probs: t.value(views.aug.mask_probs).clone(),
        masked_features: t.value(views.aug.x_aug).clone(),
    });
    state.epoch = epoch;
    state.history.push(loss);
    state.adversary_trace.push(trace.clone());
    Ok(StepReport {
        loss,
        adversary_trace: trace,
        view,
    })
}

/// Where `fit` writes trial artifacts.
#[derive(Debug, Clone)]
pub struct TrialOutput {
    pub dir: PathBuf,
    pub dataset: String,
    /// Checkpoint epochs on top of [`TrainConfig::checkpoint_epochs`].
    pub extra_checkpoints: Vec<usize>,
}

impl TrialOutput {
    pub fn new(dir: impl Into<PathBuf>, dataset: impl Into<String>) -> Self {
        TrialOutput {
            dir: dir.into(),
            dataset: dataset.into(),
            extra_checkpoints: Vec::new(),
        }
    }

    pub fn with_checkpoints(mut self, epochs: impl IntoIterator<Item = usize>) -> Self {
        self.extra_checkpoints.extend(epochs);
        self
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.dir.join("metrics.csv")
    }

    pub fn metadata_path(&self) -> PathBuf {
        self.dir.join("metadata.json")
    }

    pub fn checkpoint_path(&self, epoch: usize) -> PathBuf {
        self.dir.join("checkpoints").join(format!("epoch_{epoch:06}.json"))
    }

    pub fn final_checkpoint_path(&self) -> PathBuf {
        self.dir.join("checkpoint.json")
    }
}

/// Callback invoked after every epoch with the epoch number, its losses
/// and its sampled view.
pub type EpochObserver<'a> = &'a mut dyn FnMut(usize, &LossBreakdown, &AugmentedView);

/// Trains for `config.epochs` epochs without writing artifacts.
pub fn fit(graph: &Graph, config: &TrainConfig) -> Result<TrainState> {
    fit_with(graph, config, None, None)
}

/// Trains and writes metrics CSV, checkpoints and metadata into `output`.
/// On failure the metrics written so far and the last checkpoint remain.
pub fn fit_with(
    graph: &Graph,
    config: &TrainConfig,
    output: Option<&TrialOutput>,
    mut observer: Option<EpochObserver<'_>>,
) -> Result<TrainState> {
    let started = Instant::now();
    let mut state = TrainState::new(graph, config)?;
    let mut metrics = match output {
        Some(out) => {
            fs::create_dir_all(&out.dir).map_err(|e| Error::io(&out.dir, e))?;
            let path = out.metrics_path();
            let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
            writeln!(w, "epoch,adv,con,reconst,total").map_err(|e| Error::io(&path, e))?;
            Some((w, path))
        }
        None => None,
    };
    let mut checkpoints = config.checkpoint_epochs();
    if let Some(out) = output {
        checkpoints.extend(out.extra_checkpoints.iter().copied().filter(|&e| e >= 1 && e <= config.epochs));
        checkpoints.sort_unstable();
        checkpoints.dedup();
    }
    let log_every = (config.epochs / 20).max(1);

    let mut outcome = Ok(());
    while state.epoch < config.epochs {
        let report = match step(&mut state, graph, config, observer.is_some()) {
            Ok(r) => r,
            Err(e) => {
                outcome = Err(e);
                break;
            }
        };
        let epoch = state.epoch;
        let l = report.loss;
        if let Some(obs) = observer.as_mut() {
            obs(epoch, &l, report.view.as_ref().expect("view requested"));
        }
        if let Some((w, path)) = metrics.as_mut() {
            writeln!(w, "{epoch},{},{},{},{}", l.adv, l.con, l.reconst, l.total)
                .and_then(|_| w.flush())
                .map_err(|e| Error::io(&*path, e))?;
        }
        if epoch % log_every == 0 || epoch == 1 {
            info!(
                "epoch {epoch}/{}: adv {:.4} con {:.4} reconst {:.4} total {:.4}",
                config.epochs, l.adv, l.con, l.reconst, l.total
            );
        }
        if let Some(out) = output {
            if checkpoints.binary_search(&epoch).is_ok() {
                let ck = Checkpoint::capture(&state.models, checkpoint_metadata(graph, config, out, epoch));
                ck.save(&out.checkpoint_path(epoch))?;
                if epoch == config.epochs {
                    ck.save(&out.final_checkpoint_path())?;
                }
                debug!("checkpoint at epoch {epoch}");
            }
        }
    }

    if let Some(out) = output {
        let meta = json!({
            "dataset": out.dataset,
            "config": config,
            "code_version": env!("CARGO_PKG_VERSION"),
            "wall_clock_seconds": started.elapsed().as_secs_f64(),
            "epochs_completed": state.epoch,
            "status": if outcome.is_ok() { "complete" } else { "failed" },
            "error": outcome.as_ref().err().map(|e| e.to_string()),
            "candidate_set": candidate_set(graph, config),
            "bce_pair_multiplicity": PAIR_MULTIPLICITY,
            "nodes": graph.num_nodes(),
            "features": graph.num_features(),
            "sensitive_groups": graph.sensitive_count,
        });
        let path = out.metadata_path();
        fs::write(&path, serde_json::to_vec_pretty(&meta)?).map_err(|e| Error::io(&path, e))?;
    }
    outcome.map(|_| state)
}

fn candidate_set(graph: &Graph, config: &TrainConfig) -> &'static str {
    if graph.num_nodes() <= config.model.dense_threshold {
        "all_pairs"
    } else {
        "edges_plus_sampled_non_edges"
    }
}

fn checkpoint_metadata(graph: &Graph, config: &TrainConfig, out: &TrialOutput, epoch: usize) -> serde_json::Value {
    json!({
        "dataset": out.dataset,
        "epoch": epoch,
        "seed": config.seed,
        "config": config,
        "features": graph.num_features(),
        "sensitive_groups": graph.sensitive_count,
    })
}

/// Models stored in a checkpoint written by [`fit_with`], with the
/// training config and epoch recorded alongside.
pub fn load_checkpoint(path: &Path) -> Result<(ModelSet, TrainConfig, usize)> {
    let ck = Checkpoint::load(path)?;
    let meta = &ck.metadata;
    let field = |name: &str| {
        meta.get(name)
            .and_then(serde_json::Value::as_u64)
            .map(|v| v as usize)
            .ok_or_else(|| Error::Checkpoint(format!("metadata field {name} missing")))
    };
    let features = field("features")?;
    let groups = field("sensitive_groups")?;
    let epoch = field("epoch")?;
    let config: TrainConfig = serde_json::from_value(
        meta.get("config")
            .cloned()
            .ok_or_else(|| Error::Checkpoint("metadata field config missing".into()))?,
    )?;
    let mut models = ModelSet::new(features, groups, &config.model, &mut derive_rng(0, "restore"));
    ck.restore(&mut models)?;
    Ok((models, config, epoch))
}

/// Which representation downstream evaluation reads.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    /// `f` on the input graph.
    #[default]
    Original,
    /// `f` on one augmented view drawn with the given seed.
    Augmented { seed: u64 },
}

/// Frozen representations for evaluation.
pub fn embeddings(models: &ModelSet, graph: &Graph, config: &TrainConfig, source: EmbeddingSource) -> Result<Array2<f64>> {
    use crate::models::{augment, represent, represent_view, Adjacency};
    match source {
        EmbeddingSource::Original => represent(&models.encoder, Adjacency::Graph(graph), &graph.features),
        EmbeddingSource::Augmented { seed } => {
            let view = augment(
                &models.augmentor,
                graph,
                config.model.dense_threshold,
                &mut derive_rng(seed, "eval-view"),
                config.ablation(),
            )?;
            represent_view(&models.encoder, &view)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradients;
    use crate::graph::synthetic::PlantedBias;

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            model_lr: 1e-3,
            model: ModelConfig {
                hidden: 8,
                embedding: 8,
                adversary_hidden: 8,
                ..ModelConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    fn tiny_graph() -> Graph {
        PlantedBias {
            nodes: 30,
            features: 4,
            p_intra: 0.3,
            p_inter: 0.05,
            ..PlantedBias::default()
        }
        .generate(5)
        .unwrap()
    }

    fn bits(p: &impl Parameters) -> Vec<u64> {
        p.named_params()
            .iter()
            .flat_map(|(_, a)| a.iter().map(|x| x.to_bits()).collect::<Vec<_>>())
            .collect()
    }

    #[test]
    fn checkpoint_cadence() {
        let c = TrainConfig { epochs: 25, ..TrainConfig::default() };
        assert_eq!(c.checkpoint_epochs(), vec![2, 4, 6, 8, 10, 12, 14, 16, 18, 20, 22, 24, 25]);
        let c = TrainConfig { epochs: 500, ..TrainConfig::default() };
        assert_eq!(c.checkpoint_epochs().len(), 10);
        let c = TrainConfig { epochs: 1, ..TrainConfig::default() };
        assert_eq!(c.checkpoint_epochs(), vec![1]);
    }

    #[test]
    fn invalid_configs_rejected() {
        let g = tiny_graph();
        for c in [
            TrainConfig { epochs: 0, ..tiny_config() },
            TrainConfig { model_lr: 0.0, ..tiny_config() },
            TrainConfig { model_lr: -1.0, ..tiny_config() },
        ] {
            assert!(matches!(TrainState::new(&g, &c), Err(Error::Config(_))));
        }
    }

    #[test]
    fn generator_step_leaves_adversary_untouched() {
        let g = tiny_graph();
        let cfg = TrainConfig { adversary_steps_per_epoch: 0, ..tiny_config() };
        let mut s = TrainState::new(&g, &cfg).unwrap();
        let k0 = bits(&s.models.adversary);
        let g0 = bits(&s.models.augmentor);
        let f0 = bits(&s.models.encoder);
        train_step(&mut s, &g, &cfg).unwrap();
        assert_eq!(bits(&s.models.adversary), k0);
        assert_ne!(bits(&s.models.augmentor), g0);
        assert_ne!(bits(&s.models.encoder), f0);
    }

    #[test]
    fn adversary_step_only_moves_adversary() {
        let g = tiny_graph();
        let cfg = tiny_config();
        let mut s = TrainState::new(&g, &cfg).unwrap();
        let gf0 = (bits(&s.models.augmentor), bits(&s.models.encoder));
        let k0 = bits(&s.models.adversary);
        let h = crate::models::represent(&s.models.encoder, crate::models::Adjacency::Graph(&g), &g.features).unwrap();
        let sens = Rc::new(g.sensitive.clone());
        adversary_step(&mut s.models.adversary, &mut s.opt_adversary, &h, &sens);
        assert_eq!((bits(&s.models.augmentor), bits(&s.models.encoder)), gf0);
        assert_ne!(bits(&s.models.adversary), k0);
    }

    #[test]
    fn adversary_gradient_vanishes_without_alpha() {
        let g = tiny_graph();
        let mut cfg = tiny_config();
        cfg.loss_weights.alpha = 0.0;
        let s = TrainState::new(&g, &cfg).unwrap();
        let noise = AugNoise::draw(&g, 5000, &mut derive_rng(0, "n"));
        let mut t = Tape::new();
        let gb = s.models.augmentor.bind(&mut t);
        let fb = s.models.encoder.encoder.bind(&mut t);
        let views = views_on_tape(&mut t, &gb, &fb, &g, &noise, Ablation::default(), Sampling::StraightThrough);
        let k = s.models.adversary.mlp.bind(&mut t);
        let obj = objective_on_tape(&mut t, &views, &k, Rc::new(g.sensitive.clone()), &cfg.loss_weights);
        let grads = t.backward(obj.total);
        for gk in collect_grads(&t, &grads, &k.vars()) {
            assert!(gk.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn history_tracks_epochs_and_is_deterministic() {
        let g = tiny_graph();
        let cfg = tiny_config();
        let a = fit(&g, &cfg).unwrap();
        let b = fit(&g, &cfg).unwrap();
        assert_eq!(a.history.len(), 3);
        assert_eq!(a.epoch, 3);
        assert_eq!(a.history, b.history);
        assert_eq!(bits(&a.models), bits(&b.models));
        let c = fit(&g, &TrainConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.history, c.history);
    }

    #[test]
    fn one_epoch_fit_equals_one_step() {
        let g = tiny_graph();
        let cfg = TrainConfig { epochs: 1, ..tiny_config() };
        let fitted = fit(&g, &cfg).unwrap();
        let mut s = TrainState::new(&g, &cfg).unwrap();
        train_step(&mut s, &g, &cfg).unwrap();
        assert_eq!(fitted.history, s.history);
        assert_eq!(bits(&fitted.models), bits(&s.models));
    }

    #[test]
    fn identity_views_under_both_ablations() {
        let g = tiny_graph();
        let cfg = TrainConfig { ablate_ep: true, ablate_fm: true, ..tiny_config() };
        let a = g.dense_adjacency();
        let mut seen = 0;
        let mut obs = |_: usize, l: &LossBreakdown, v: &AugmentedView| {
            assert_eq!(v.dense_sampled_adjacency(), a);
            assert_eq!(v.masked_features, g.features);
            assert!(l.reconst < 1e-6 * g.num_nodes().pow(2) as f64);
            seen += 1;
        };
        fit_with(&g, &cfg, None, Some(&mut obs)).unwrap();
        assert_eq!(seen, 3);
    }

    #[test]
    fn artifacts_written_and_reloadable() {
        let g = tiny_graph();
        let cfg = TrainConfig { epochs: 4, ..tiny_config() };
        let dir = tempfile::tempdir().unwrap();
        let out = TrialOutput::new(dir.path().join("trial"), "synthetic");
        let state = fit_with(&g, &cfg, Some(&out), None).unwrap();
        let csv = fs::read_to_string(out.metrics_path()).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "epoch,adv,con,reconst,total");
        assert_eq!(lines.len(), 5);
        let first: Vec<f64> = lines[1].split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(first[4].to_bits(), state.history[0].total.to_bits());
        let (models, c2, epoch) = load_checkpoint(&out.final_checkpoint_path()).unwrap();
        assert_eq!(epoch, 4);
        assert_eq!(c2, cfg);
        assert_eq!(bits(&models), bits(&state.models));
        assert!(out.checkpoint_path(2).exists());
        let meta: serde_json::Value = serde_json::from_slice(&fs::read(out.metadata_path()).unwrap()).unwrap();
        assert_eq!(meta["status"], "complete");
        assert_eq!(meta["epochs_completed"], 4);
    }

    #[test]
    fn inner_adversary_steps_climb() {
        let g = tiny_graph();
        let cfg = TrainConfig {
            epochs: 20,
            adversary_steps_per_epoch: 4,
            ..tiny_config()
        };
        let s = fit(&g, &cfg).unwrap();
        let mut deltas: Vec<f64> = s
            .adversary_trace
            .iter()
            .flat_map(|tr| tr.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>())
            .collect();
        deltas.sort_by(f64::total_cmp);
        assert!(deltas[deltas.len() / 2] >= 0.0, "median delta {}", deltas[deltas.len() / 2]);
    }

    #[test]
    fn combined_objective_matches_finite_differences() {
        let lw = LossWeights { alpha: 1.0, beta: 0.5, gamma: 0.1, lambda: 0.7, tau: 0.5 };
        for abl in [
            Ablation::default(),
            Ablation { no_edge_perturbation: true, no_feature_masking: false },
            Ablation { no_edge_perturbation: false, no_feature_masking: true },
        ] {
            let r = combined_check(lw, abl);
            assert!(r.max_rel_error <= 1e-4, "{abl:?}: {r:?}");
        }
    }

    fn combined_check(lw: LossWeights, abl: Ablation) -> crate::gradcheck::GradCheck {
        let g = PlantedBias { nodes: 5, features: 3, p_intra: 0.7, p_inter: 0.3, ..PlantedBias::default() }
            .generate(2)
            .unwrap();
        let cfg = TrainConfig {
            model: ModelConfig { hidden: 4, embedding: 3, adversary_hidden: 3, ..ModelConfig::default() },
            loss_weights: lw,
            ..TrainConfig::default()
        };
        let s = TrainState::new(&g, &cfg).unwrap();
        let noise = AugNoise::draw(&g, 5000, &mut derive_rng(4, "noise"));
        // nonzero biases keep ReLU inputs off the kink at exactly 0
        let mut rng = derive_rng(7, "bias");
        let inputs: Vec<Array2<f64>> = s
            .models
            .named_params()
            .into_iter()
            .map(|(name, a)| {
                if name.ends_with("bias") {
                    a.mapv(|_| rand::Rng::random_range(&mut rng, -0.5..0.5))
                } else {
                    a.clone()
                }
            })
            .collect();
        let sens = Rc::new(g.sensitive.clone());
        let r = check_gradients(&inputs, |t, v| {
            let (gb, fb, kb) = s.models.bind_vars(v);
            let views = views_on_tape(t, &gb, &fb, &g, &noise, abl, Sampling::Relaxed);
            objective_on_tape(t, &views, &kb, sens.clone(), &cfg.loss_weights).total
        });
        r
    }
}
