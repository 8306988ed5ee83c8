//! Single trials: train, evaluate, persist.
//!
//! A trial directory holds
//!
//! ```text
//! config.json        ExperimentConfig
//! metrics.csv        epoch,adv,con,reconst,total
//! metadata.json      training metadata
//! checkpoints/       periodic checkpoints
//! checkpoint.json    final checkpoint
//! report.json        ExperimentReport
//! results.csv        one results-table row
//! ```
//!
//! The report can be rebuilt from `config.json` plus any checkpoint with
//! [`evaluate_checkpoint`].

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use graphair::evaluation::{append_results, evaluate_link, evaluate_node, MetricsReport, ResultsRow};
use graphair::graph::{split_edges, EdgeSplit, SplitRatios};
use graphair::losses::LossBreakdown;
use graphair::models::ModelSet;
use graphair::trainer::{embeddings, fit_with, load_checkpoint, EmbeddingSource, TrialOutput};
use graphair::Graph;
use log::info;
use serde::{Deserialize, Serialize};

use crate::config::{load_graph, prepare_graph, ExperimentConfig, Task};

pub const CONFIG_FILE: &str = "config.json";
pub const REPORT_FILE: &str = "report.json";
pub const RESULTS_FILE: &str = "results.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dataset: String,
    pub task: Task,
    pub method: String,
    pub seed: u64,
    pub epoch: usize,
    pub nodes: usize,
    pub final_loss: Option<LossBreakdown>,
    pub node: Option<MetricsReport>,
    pub link_mixed: Option<MetricsReport>,
    pub link_subgroup: Option<MetricsReport>,
}

/// Accuracy and the two fairness gaps used for model selection, in percent.
/// Link tasks use the mixed dyadic gaps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Headline {
    pub acc: f64,
    pub dp: f64,
    pub eo: f64,
}

impl ExperimentReport {
    pub fn primary(&self) -> &MetricsReport {
        self.node
            .as_ref()
            .or(self.link_mixed.as_ref())
            .expect("report holds node or link metrics")
    }

    pub fn headline(&self) -> Headline {
        let r = self.primary();
        Headline {
            acc: r.acc.mean,
            dp: r.dp.mean,
            eo: r.eo.mean,
        }
    }

    pub fn results_row(&self) -> ResultsRow {
        match (&self.node, &self.link_mixed, &self.link_subgroup) {
            (Some(n), _, _) => ResultsRow::node(&self.method, &self.dataset, n),
            (None, Some(m), Some(s)) => ResultsRow::link(&self.method, &self.dataset, m, s),
            _ => unreachable!("report holds node or link metrics"),
        }
    }
}

/// Graph, and for link prediction the edge split, an experiment works on.
pub struct TrialData {
    /// Graph the models see: the full graph for node classification, the
    /// training edges only for link prediction.
    pub graph: Graph,
    pub split: Option<EdgeSplit>,
}

pub fn trial_data(cfg: &ExperimentConfig, data_root: &Path) -> anyhow::Result<TrialData> {
    let raw = load_graph(&cfg.dataset, data_root, cfg.train.seed)?;
    let graph = prepare_graph(raw, cfg)?;
    match cfg.task {
        Task::Node => Ok(TrialData { graph, split: None }),
        Task::Link => {
            let split = split_edges(&graph, SplitRatios::LINK_DEFAULT, cfg.train.seed)?;
            let train = split.train_graph(&graph)?;
            Ok(TrialData {
                graph: train,
                split: Some(split),
            })
        }
    }
}

/// Evaluates frozen `models` on the trial data.
pub fn evaluate_models(
    models: &ModelSet,
    data: &TrialData,
    cfg: &ExperimentConfig,
    epoch: usize,
    final_loss: Option<LossBreakdown>,
) -> anyhow::Result<ExperimentReport> {
    let g = &data.graph;
    let h = embeddings(models, g, &cfg.train, EmbeddingSource::Original)?;
    let seed = cfg.train.seed;
    let mut report = ExperimentReport {
        dataset: cfg.dataset.clone(),
        task: cfg.task,
        method: cfg.method_label(),
        seed,
        epoch,
        nodes: g.num_nodes(),
        final_loss,
        node: None,
        link_mixed: None,
        link_subgroup: None,
    };
    match (&data.split, cfg.task) {
        (None, Task::Node) => {
            let labels = g.labels.as_deref().context("node task without labels")?;
            report.node = Some(evaluate_node(&h, labels, &g.sensitive, &g.masks, &cfg.classifier, cfg.repeats, seed)?);
        }
        (Some(split), Task::Link) => {
            let (m, s) = evaluate_link(&h, split, &g.sensitive, &cfg.classifier, cfg.repeats, seed)?;
            report.link_mixed = Some(m);
            report.link_subgroup = Some(s);
        }
        _ => anyhow::bail!("trial data does not match task {:?}", cfg.task),
    }
    Ok(report)
}

/// Writes `value` as pretty JSON through a temporary file.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_vec_pretty(value)?).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

/// Trains, evaluates and writes a complete trial directory at `out`.
///
/// `extra_checkpoints` adds checkpoint epochs beyond the default cadence.
/// When training fails the metrics and checkpoints written so far are kept.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    data_root: &Path,
    out: &Path,
    extra_checkpoints: &[usize],
) -> anyhow::Result<ExperimentReport> {
    cfg.validate()?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    cfg.save(&out.join(CONFIG_FILE))?;
    let data = trial_data(cfg, data_root)?;
    info!(
        "{} {:?}: {} nodes, {} edges, {} epochs, seed {}",
        cfg.dataset,
        cfg.task,
        data.graph.num_nodes(),
        data.graph.num_edges(),
        cfg.train.epochs,
        cfg.train.seed
    );
    let trial = TrialOutput::new(out, cfg.dataset.clone()).with_checkpoints(extra_checkpoints.iter().copied());
    let state = fit_with(&data.graph, &cfg.train, Some(&trial), None)?;
    let report = evaluate_models(&state.models, &data, cfg, state.epoch, state.history.last().copied())?;
    write_json(&out.join(REPORT_FILE), &report)?;
    let results = out.join(RESULTS_FILE);
    if results.exists() {
        fs::remove_file(&results).with_context(|| format!("removing {}", results.display()))?;
    }
    append_results(&results, &[report.results_row()])?;
    Ok(report)
}

pub fn run_experiment(cfg: &ExperimentConfig, data_root: &Path, out: &Path) -> anyhow::Result<ExperimentReport> {
    run_experiment_with(cfg, data_root, out, &[])
}

/// Sorted `(epoch, path)` of every checkpoint in a trial directory.
pub fn list_checkpoints(trial: &Path) -> anyhow::Result<Vec<(usize, PathBuf)>> {
    let out = TrialOutput::new(trial, "");
    let dir = out.checkpoint_path(1);
    let dir = dir.parent().expect("checkpoint path has a parent");
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let epoch = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.strip_prefix("epoch_"))
            .and_then(|s| s.parse::<usize>().ok());
        if let (Some(e), Some("json")) = (epoch, path.extension().and_then(|x| x.to_str())) {
            found.push((e, path));
        }
    }
    found.sort();
    Ok(found)
}

/// Loss row of `epoch` from a trial's metrics CSV.
pub fn loss_at(trial: &Path, epoch: usize) -> anyhow::Result<Option<LossBreakdown>> {
    let path = TrialOutput::new(trial, "").metrics_path();
    let mut rdr = csv::Reader::from_path(&path).with_context(|| format!("reading {}", path.display()))?;
    for row in rdr.records() {
        let row = row?;
        let f = |i: usize| -> anyhow::Result<f64> { Ok(row.get(i).context("short metrics row")?.parse()?) };
        if row.get(0).and_then(|e| e.parse::<usize>().ok()) == Some(epoch) {
            return Ok(Some(LossBreakdown {
                adv: f(1)?,
                con: f(2)?,
                reconst: f(3)?,
                total: f(4)?,
            }));
        }
    }
    Ok(None)
}

/// Rebuilds the report of a checkpoint from persisted artifacts only.
pub fn evaluate_checkpoint(trial: &Path, checkpoint: &Path, data_root: &Path) -> anyhow::Result<ExperimentReport> {
    let cfg: ExperimentConfig = read_json(&trial.join(CONFIG_FILE))?;
    let (models, _, epoch) = load_checkpoint(checkpoint)?;
    let data = trial_data(&cfg, data_root)?;
    evaluate_models(&models, &data, &cfg, epoch, loss_at(trial, epoch)?)
}

#[cfg(test)]
pub(crate) mod testutil {
    use crate::config::{ExperimentConfig, Task, SYNTHETIC};

    /// Few epochs, narrow layers, 60-node subsample of the synthetic graph.
    pub(crate) fn tiny(task: Task) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::for_dataset(SYNTHETIC, task);
        cfg.train.epochs = 4;
        cfg.train.model.hidden = 8;
        cfg.train.model.embedding = 8;
        cfg.train.model.adversary_hidden = 8;
        cfg.classifier.hidden = 8;
        cfg.classifier.epochs = 30;
        cfg.repeats = 2;
        cfg.subsample = Some(60);
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::tiny;
    use super::*;

    #[test]
    fn node_trial_is_regenerable() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("t");
        let cfg = tiny(Task::Node);
        let report = run_experiment(&cfg, dir.path(), &out).unwrap();
        assert_eq!(report.epoch, 4);
        assert_eq!(report.nodes, 60);
        assert!(report.node.is_some() && report.link_mixed.is_none());
        let stored: ExperimentReport = read_json(&out.join(REPORT_FILE)).unwrap();
        assert_eq!(stored, report);
        let rebuilt = evaluate_checkpoint(&out, &out.join("checkpoint.json"), dir.path()).unwrap();
        assert_eq!(rebuilt, report);
        let cps: Vec<usize> = list_checkpoints(&out).unwrap().into_iter().map(|(e, _)| e).collect();
        assert_eq!(cps, vec![1, 2, 3, 4]);
        let csv = fs::read_to_string(out.join(RESULTS_FILE)).unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.starts_with("method,dataset,acc,auc,dp_m,eo_m,dp_s,eo_s,seed_count"));
    }

    #[test]
    fn link_trial_reports_both_dyadic_modes() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_experiment(&tiny(Task::Link), dir.path(), &dir.path().join("t")).unwrap();
        let (m, s) = (report.link_mixed.as_ref().unwrap(), report.link_subgroup.as_ref().unwrap());
        assert!(m.auc.is_some());
        assert_eq!(m.acc, s.acc);
        assert!(report.results_row().dp_s.contains('±'));
    }

    #[test]
    fn identical_configs_give_identical_reports() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(Task::Node);
        let a = run_experiment(&cfg, dir.path(), &dir.path().join("a")).unwrap();
        let b = run_experiment(&cfg, dir.path(), &dir.path().join("b")).unwrap();
        assert_eq!(a, b);
        let ma = fs::read(dir.path().join("a/metrics.csv")).unwrap();
        let mb = fs::read(dir.path().join("b/metrics.csv")).unwrap();
        assert_eq!(ma, mb);
    }

    #[test]
    fn failed_config_leaves_config_only() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(Task::Node);
        cfg.dataset = "nba".into();
        let out = dir.path().join("t");
        assert!(run_experiment(&cfg, dir.path(), &out).is_err());
        assert!(out.join(CONFIG_FILE).exists());
        assert!(!out.join(REPORT_FILE).exists());
    }
}
