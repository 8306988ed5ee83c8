//! Downstream evaluation of frozen representations: node classification and
//! link prediction with accuracy, AUC and group fairness gaps.

use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::analysis::average_ranks;
use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{Edge, EdgeSplit, NodeMasks};
use crate::losses::EPS;
use crate::nn::{collect_grads, Adam, AdamConfig, BoundMlp, Mlp, Parameters};
use crate::seed::{derive_rng, derive_seed};

fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        });
    }
    Ok(())
}

/// Positive rate per group id, skipping ids with no members.
fn rates(hits: &[bool], groups: &[usize], keep: impl Fn(usize) -> bool) -> BTreeMap<usize, (usize, usize)> {
    let mut m: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (i, (&h, &g)) in hits.iter().zip(groups).enumerate() {
        if keep(i) {
            let e = m.entry(g).or_default();
            e.0 += usize::from(h);
            e.1 += 1;
        }
    }
    m
}

fn spread(m: &BTreeMap<usize, (usize, usize)>) -> Option<f64> {
    let r = m.values().map(|&(k, n)| k as f64 / n as f64);
    let max = r.clone().fold(f64::NEG_INFINITY, f64::max);
    let min = r.fold(f64::INFINITY, f64::min);
    (!m.is_empty()).then_some(max - min)
}

/// Largest gap in selection rate `P(Y_hat = 1 | D = d)` across the groups
/// present in `groups`. With two groups this is `|rate_0 - rate_1|`.
pub fn delta_dp(y_hat: &[bool], groups: &[usize]) -> Result<f64> {
    check_len("delta_dp groups", y_hat.len(), groups.len())?;
    spread(&rates(y_hat, groups, |_| true)).ok_or_else(|| Error::OutOfRange {
        what: "delta_dp sample size",
        value: "0".into(),
        range: ">= 1".into(),
    })
}

/// True and false positive rate gaps; `None` when no group has a defined
/// rate for that gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EoGaps {
    pub eo: f64,
    pub tpr_gap: Option<f64>,
    pub fpr_gap: Option<f64>,
    /// Groups left out of the TPR gap for having no positives.
    pub tpr_excluded: Vec<usize>,
    /// Groups left out of the FPR gap for having no negatives.
    pub fpr_excluded: Vec<usize>,
}

/// `max(TPR gap, FPR gap)` across groups; a group without positives
/// (negatives) is left out of the TPR (FPR) gap only.
pub fn delta_eo(y: &[bool], y_hat: &[bool], groups: &[usize]) -> Result<EoGaps> {
    check_len("delta_eo predictions", y.len(), y_hat.len())?;
    check_len("delta_eo groups", y.len(), groups.len())?;
    let present: std::collections::BTreeSet<usize> = groups.iter().copied().collect();
    let tpr = rates(y_hat, groups, |i| y[i]);
    let fpr = rates(y_hat, groups, |i| !y[i]);
    let missing = |m: &BTreeMap<usize, (usize, usize)>| present.iter().copied().filter(|g| !m.contains_key(g)).collect();
    let tpr_gap = spread(&tpr);
    let fpr_gap = spread(&fpr);
    let eo = match (tpr_gap, fpr_gap) {
        (None, None) => return Err(Error::EoUndefined),
        (a, b) => a.unwrap_or(0.0).max(b.unwrap_or(0.0)),
    };
    Ok(EoGaps {
        eo,
        tpr_gap,
        fpr_gap,
        tpr_excluded: missing(&tpr),
        fpr_excluded: missing(&fpr),
    })
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_len("auc labels", scores.len(), labels.len())?;
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels("auc needs both classes".into()));
    }
    let ranks = average_ranks(ndarray::ArrayView1::from(scores));
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let p = pos as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

/// Elementwise products `h_u * h_v`, one row per edge.
pub fn link_embed(h: &Array2<f64>, edges: &[Edge]) -> Result<Array2<f64>> {
    let n = h.nrows();
    let mut out = Array2::zeros((edges.len(), h.ncols()));
    for (mut row, &(u, v)) in out.rows_mut().into_iter().zip(edges) {
        if u >= n || v >= n {
            return Err(Error::OutOfRange {
                what: "edge endpoint",
                value: format!("({u}, {v})"),
                range: format!("0..{n}"),
            });
        }
        row.assign(&(&h.row(u) * &h.row(v)));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DyadicMode {
    /// Group 0 for intra-group edges, 1 for inter-group edges.
    Mixed,
    /// One group per unordered pair of endpoint sensitive values.
    Subgroup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicGroups {
    pub mode: DyadicMode,
    pub group_of: Vec<usize>,
    pub group_count: usize,
    /// Sensitive-value pair of each subgroup id (empty in mixed mode).
    pub labels: Vec<(usize, usize)>,
}

pub fn dyadic_groups(edges: &[Edge], s: &[usize], mode: DyadicMode) -> Result<DyadicGroups> {
    for &(u, v) in edges {
        if u >= s.len() || v >= s.len() {
            return Err(Error::OutOfRange {
                what: "edge endpoint",
                value: format!("({u}, {v})"),
                range: format!("0..{}", s.len()),
            });
        }
    }
    Ok(match mode {
        DyadicMode::Mixed => DyadicGroups {
            mode,
            group_of: edges.iter().map(|&(u, v)| usize::from(s[u] != s[v])).collect(),
            group_count: 2,
            labels: Vec::new(),
        },
        DyadicMode::Subgroup => {
            let key = |u: usize, v: usize| (s[u].min(s[v]), s[u].max(s[v]));
            let mut ids: BTreeMap<(usize, usize), usize> = edges.iter().map(|&(u, v)| (key(u, v), 0)).collect();
            for (i, id) in ids.values_mut().enumerate() {
                *id = i;
            }
            DyadicGroups {
                mode,
                group_of: edges.iter().map(|&(u, v)| ids[&key(u, v)]).collect(),
                group_count: ids.len(),
                labels: ids.into_keys().collect(),
            }
        }
    })
}

/// Downstream classifier: one hidden ReLU layer, one logit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub hidden: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Probability above which a prediction counts as positive.
    pub threshold: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            hidden: 128,
            lr: 1e-3,
            weight_decay: 1e-5,
            epochs: 1000,
            threshold: 0.5,
        }
    }
}

impl ClassifierConfig {
    /// Published learning rate: 1e-3 for the social networks, 5e-3 for the
    /// citation networks.
    pub fn for_dataset(name: &str) -> Self {
        let lr = match name {
            "cora" | "citeseer" | "pubmed" => 5e-3,
            _ => 1e-3,
        };
        ClassifierConfig {
            lr,
            ..ClassifierConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.epochs == 0 || !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("invalid classifier config {self:?}")));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        Ok(())
    }
}

/// Trained classifier weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub mlp: Mlp,
    pub threshold: f64,
    /// Epoch whose weights were kept (best validation accuracy).
    pub selected_epoch: usize,
}

impl Classifier {
    pub fn probabilities(&self, x: &Array2<f64>) -> Vec<f64> {
        self.mlp
            .apply(x)
            .column(0)
            .iter()
            .map(|&z| crate::autograd::sigmoid(z))
            .collect()
    }

    pub fn predict(&self, x: &Array2<f64>) -> Vec<bool> {
        self.probabilities(x).into_iter().map(|p| p > self.threshold).collect()
    }
}

fn accuracy(pred: &[bool], y: &[bool]) -> f64 {
    pred.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
}

fn bce(t: &mut Tape, mlp: &BoundMlp, x: Var, y: Var) -> Var {
    let z = mlp.forward(t, x);
    let p = t.sigmoid(z);
    let lp = t.log_clamped(p, EPS, 1.0);
    let neg = t.scale(p, -1.0);
    let q = t.shift(neg, 1.0);
    let lq = t.log_clamped(q, EPS, 1.0);
    let ones = t.constant(Array2::ones(t.shape(y)));
    let ny = t.sub(ones, y);
    let a = t.mul(y, lp);
    let b = t.mul(ny, lq);
    let ll = t.add(a, b);
    let m = t.mean(ll);
    t.scale(m, -1.0)
}

/// Full-batch training with binary cross-entropy; keeps the weights of the
/// epoch with the best validation accuracy (the last epoch when no
/// validation rows are given).
pub fn train_classifier(
    x_train: &Array2<f64>,
    y_train: &[bool],
    x_val: &Array2<f64>,
    y_val: &[bool],
    config: &ClassifierConfig,
    seed: u64,
) -> Result<Classifier> {
    config.validate()?;
    check_len("classifier labels", x_train.nrows(), y_train.len())?;
    check_len("classifier validation labels", x_val.nrows(), y_val.len())?;
    if y_train.iter().all(|&y| y) || y_train.iter().all(|&y| !y) {
        return Err(Error::DegenerateLabels(format!(
            "{} training rows, all of one class",
            y_train.len()
        )));
    }
    let mut rng = derive_rng(seed, "classifier");
    let mut mlp = Mlp::new(&[x_train.ncols(), config.hidden, 1], &mut rng);
    let mut opt = Adam::new(AdamConfig::new(config.lr, config.weight_decay));
    let yt = Array2::from_shape_fn((y_train.len(), 1), |(i, _)| f64::from(u8::from(y_train[i])));
    let mut best = (f64::NEG_INFINITY, mlp.clone(), 0);
    for epoch in 1..=config.epochs {
        let mut t = Tape::new();
        let b = mlp.bind(&mut t);
        let x = t.constant(x_train.clone());
        let y = t.constant(yt.clone());
        let loss = bce(&mut t, &b, x, y);
        let grads = t.backward(loss);
        let g = collect_grads(&t, &grads, &b.vars());
        opt.step(mlp.params_mut(), &g);
        if !y_val.is_empty() {
            let c = Classifier {
                mlp: mlp.clone(),
                threshold: config.threshold,
                selected_epoch: epoch,
            };
            let acc = accuracy(&c.predict(x_val), y_val);
            if acc > best.0 {
                best = (acc, mlp.clone(), epoch);
            }
        }
    }
    Ok(if y_val.is_empty() {
        Classifier {
            mlp,
            threshold: config.threshold,
            selected_epoch: config.epochs,
        }
    } else {
        Classifier {
            mlp: best.1,
            threshold: config.threshold,
            selected_epoch: best.2,
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportMode {
    Node,
    LinkMixed,
    LinkSubgroup,
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Stat { mean, std: var.sqrt() }
    }
}

/// Metrics of one classifier seed, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub acc: f64,
    pub auc: Option<f64>,
    pub dp: f64,
    pub eo: f64,
    pub tpr_gap: Option<f64>,
    pub fpr_gap: Option<f64>,
}

/// Metrics in percent, mean and std over classifier seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: ReportMode,
    pub acc: Stat,
    pub auc: Option<Stat>,
    pub dp: Stat,
    pub eo: Stat,
    pub tpr_gap: Stat,
    pub fpr_gap: Stat,
    pub repeats: usize,
    pub threshold: f64,
    pub runs: Vec<RunMetrics>,
    pub warnings: Vec<String>,
}

impl MetricsReport {
    fn from_runs(mode: ReportMode, runs: Vec<RunMetrics>, threshold: f64, warnings: Vec<String>) -> Self {
        let col = |f: &dyn Fn(&RunMetrics) -> f64| Stat::of(&runs.iter().map(f).collect::<Vec<_>>());
        let auc = runs
            .iter()
            .map(|r| r.auc)
            .collect::<Option<Vec<f64>>>()
            .map(|v| Stat::of(&v));
        MetricsReport {
            mode,
            acc: col(&|r| r.acc),
            auc,
            dp: col(&|r| r.dp),
            eo: col(&|r| r.eo),
            tpr_gap: col(&|r| r.tpr_gap.unwrap_or(0.0)),
            fpr_gap: col(&|r| r.fpr_gap.unwrap_or(0.0)),
            repeats: runs.len(),
            threshold,
            runs,
            warnings,
        }
    }
}

fn pct(x: f64) -> f64 {
    100.0 * x
}

fn fairness(y: &[bool], pred: &[bool], groups: &[usize], label: &str, warnings: &mut Vec<String>) -> Result<(f64, EoGaps)> {
    let dp = delta_dp(pred, groups)?;
    let eo = delta_eo(y, pred, groups)?;
    for (kind, ex) in [("TPR", &eo.tpr_excluded), ("FPR", &eo.fpr_excluded)] {
        if !ex.is_empty() {
            let msg = format!("{label}: groups {ex:?} excluded from the {kind} gap (empty denominator)");
            warn!("{msg}");
            if !warnings.contains(&msg) {
                warnings.push(msg);
            }
        }
    }
    Ok((dp, eo))
}

fn binary_labels(labels: &[i64], rows: &[usize]) -> Result<Vec<bool>> {
    rows.iter()
        .map(|&i| match labels[i] {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::DegenerateLabels(format!("node {i} has non-binary label {other}"))),
        })
        .collect()
}

/// Node classification on frozen representations `h` with the sensitive
/// attribute as the fairness group.
pub fn evaluate_node(
    h: &Array2<f64>,
    labels: &[i64],
    s: &[usize],
    masks: &NodeMasks,
    config: &ClassifierConfig,
    repeats: usize,
    seed: u64,
) -> Result<MetricsReport> {
    let n = h.nrows();
    check_len("labels", n, labels.len())?;
    check_len("sensitive attribute", n, s.len())?;
    check_len("masks", n, masks.train.len())?;
    let pick = |mask: &[bool]| -> Vec<usize> { (0..n).filter(|&i| mask[i] && labels[i] >= 0).collect() };
    let (tr, va, te) = (pick(&masks.train), pick(&masks.val), pick(&masks.test));
    if te.is_empty() {
        return Err(Error::DegenerateLabels("no labeled test nodes".into()));
    }
    let (ytr, yva, yte) = (binary_labels(labels, &tr)?, binary_labels(labels, &va)?, binary_labels(labels, &te)?);
    let (xtr, xva, xte) = (h.select(Axis(0), &tr), h.select(Axis(0), &va), h.select(Axis(0), &te));
    let groups: Vec<usize> = te.iter().map(|&i| s[i]).collect();
    let mut warnings = Vec::new();
    let mut runs = Vec::with_capacity(repeats);
    for r in 0..repeats.max(1) {
        let rs = derive_seed(seed, &format!("node-classifier-{r}"));
        let c = train_classifier(&xtr, &ytr, &xva, &yva, config, rs)?;
        let pred = c.predict(&xte);
        let (dp, eo) = fairness(&yte, &pred, &groups, "node", &mut warnings)?;
        runs.push(RunMetrics {
            seed: rs,
            acc: pct(accuracy(&pred, &yte)),
            auc: None,
            dp: pct(dp),
            eo: pct(eo.eo),
            tpr_gap: eo.tpr_gap.map(pct),
            fpr_gap: eo.fpr_gap.map(pct),
        });
    }
    Ok(MetricsReport::from_runs(ReportMode::Node, runs, config.threshold, warnings))
}

fn labeled_pairs(pos: &[Edge], neg: &[Edge]) -> (Vec<Edge>, Vec<bool>) {
    let mut e = pos.to_vec();
    e.extend_from_slice(neg);
    let mut y = vec![true; pos.len()];
    y.resize(e.len(), false);
    (e, y)
}

/// Link prediction on Hadamard embeddings of frozen `h`; returns the
/// mixed-dyadic and subgroup-dyadic reports (accuracy and AUC are shared).
pub fn evaluate_link(
    h: &Array2<f64>,
    split: &EdgeSplit,
    s: &[usize],
    config: &ClassifierConfig,
    repeats: usize,
    seed: u64,
) -> Result<(MetricsReport, MetricsReport)> {
    check_len("sensitive attribute", h.nrows(), s.len())?;
    let (etr, ytr) = labeled_pairs(&split.train_pos, &split.train_neg);
    let (eva, yva) = labeled_pairs(&split.val_pos, &split.val_neg);
    let (ete, yte) = labeled_pairs(&split.test_pos, &split.test_neg);
    let (xtr, xva, xte) = (link_embed(h, &etr)?, link_embed(h, &eva)?, link_embed(h, &ete)?);
    let mixed = dyadic_groups(&ete, s, DyadicMode::Mixed)?;
    let sub = dyadic_groups(&ete, s, DyadicMode::Subgroup)?;
    let mut warnings = (Vec::new(), Vec::new());
    let mut runs = (Vec::new(), Vec::new());
    for r in 0..repeats.max(1) {
        let rs = derive_seed(seed, &format!("link-classifier-{r}"));
        let c = train_classifier(&xtr, &ytr, &xva, &yva, config, rs)?;
        let scores = c.probabilities(&xte);
        let pred: Vec<bool> = scores.iter().map(|&p| p > config.threshold).collect();
        let acc = pct(accuracy(&pred, &yte));
        let a = pct(auc(&scores, &yte)?);
        for (groups, label, w, out) in [
            (&mixed, "link mixed", &mut warnings.0, &mut runs.0),
            (&sub, "link subgroup", &mut warnings.1, &mut runs.1),
        ] {
            let (dp, eo) = fairness(&yte, &pred, &groups.group_of, label, w)?;
            out.push(RunMetrics {
                seed: rs,
                acc,
                auc: Some(a),
                dp: pct(dp),
                eo: pct(eo.eo),
                tpr_gap: eo.tpr_gap.map(pct),
                fpr_gap: eo.fpr_gap.map(pct),
            });
        }
    }
    Ok((
        MetricsReport::from_runs(ReportMode::LinkMixed, runs.0, config.threshold, warnings.0),
        MetricsReport::from_runs(ReportMode::LinkSubgroup, runs.1, config.threshold, warnings.1),
    ))
}

/// One row of the results table; fairness columns without a value are
/// left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsRow {
    pub method: String,
    pub dataset: String,
    pub acc: String,
    pub auc: String,
    pub dp_m: String,
    pub eo_m: String,
    pub dp_s: String,
    pub eo_s: String,
    pub seed_count: usize,
}

fn fmt_stat(s: &Stat) -> String {
    format!("{:.2} ± {:.2}", s.mean, s.std)
}

impl ResultsRow {
    pub fn node(method: &str, dataset: &str, r: &MetricsReport) -> Self {
        ResultsRow {
            method: method.into(),
            dataset: dataset.into(),
            acc: fmt_stat(&r.acc),
            auc: String::new(),
            dp_m: fmt_stat(&r.dp),
            eo_m: fmt_stat(&r.eo),
            dp_s: String::new(),
            eo_s: String::new(),
            seed_count: r.repeats,
        }
    }

    pub fn link(method: &str, dataset: &str, mixed: &MetricsReport, sub: &MetricsReport) -> Self {
        ResultsRow {
            method: method.into(),
            dataset: dataset.into(),
            acc: fmt_stat(&mixed.acc),
            auc: mixed.auc.as_ref().map(fmt_stat).unwrap_or_default(),
            dp_m: fmt_stat(&mixed.dp),
            eo_m: fmt_stat(&mixed.eo),
            dp_s: fmt_stat(&sub.dp),
            eo_s: fmt_stat(&sub.eo),
            seed_count: mixed.repeats,
        }
    }
}

/// Appends rows to a results CSV, writing the header when the file is new.
pub fn append_results(path: &Path, rows: &[ResultsRow]) -> Result<()> {
    let exists = path.exists() && std::fs::metadata(path).map(|m| m.len() > 0).unwrap_or(false);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(!exists).from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
