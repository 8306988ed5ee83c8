//! Experiment configuration and dataset resolution.
//!
//! A config file is a JSON object; every field is optional and falls back
//! to the per-dataset defaults from [`ExperimentConfig::for_dataset`]:
//!
//! ```json
//! {
//!   "dataset": "nba",
//!   "task": "node",
//!   "train": { "epochs": 500, "seed": 0, "loss_weights": { "alpha": 1.0 } },
//!   "classifier": { "lr": 0.001 },
//!   "grid": { "alpha": [0.1, 1.0, 10.0], "gamma": [0.1, 1.0, 10.0], "lambda": [0.1, 1.0, 10.0] },
//!   "repeats": 5,
//!   "subsample": 1000
//! }
//! ```
//!
//! Command-line flags are applied on top of the file.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use graphair::evaluation::ClassifierConfig;
use graphair::graph::dataset::{load_dataset, load_dataset_dir, MANIFEST_FILE};
use graphair::graph::synthetic::PlantedBias;
use graphair::graph::{minibatch_subgraph, node_split, DatasetSpec, SplitRatios};
use graphair::losses::LossWeights;
use graphair::trainer::TrainConfig;
use graphair::Graph;
use serde::{Deserialize, Serialize};

/// Name of the built-in planted-bias fixture.
pub const SYNTHETIC: &str = "synthetic";

/// Environment variable naming the directory that holds one sub-directory
/// per dataset.
pub const DATA_DIR_ENV: &str = "GRAPHAIR_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Node,
    Link,
}

/// Values searched for each loss weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub alpha: Vec<f64>,
    pub gamma: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        let v = vec![0.1, 1.0, 10.0];
        Grid {
            alpha: v.clone(),
            gamma: v.clone(),
            lambda: v,
        }
    }
}

impl Grid {
    pub fn validate(&self) -> anyhow::Result<()> {
        for (name, vals) in [("alpha", &self.alpha), ("gamma", &self.gamma), ("lambda", &self.lambda)] {
            if vals.is_empty() {
                bail!("grid: no values for {name}");
            }
            if let Some(v) = vals.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                bail!("grid: {name} values must be positive, got {v}");
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.alpha.len() * self.gamma.len() * self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: String,
    pub task: Task,
    pub train: TrainConfig,
    pub classifier: ClassifierConfig,
    #[serde(default)]
    pub grid: Option<Grid>,
    pub repeats: usize,
    /// Train and evaluate on an induced subgraph of this many nodes.
    #[serde(default)]
    pub subsample: Option<usize>,
    /// Method label written to the results table.
    #[serde(default)]
    pub method: Option<String>,
}

/// File representation: everything optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    dataset: Option<String>,
    task: Option<Task>,
    train: Option<serde_json::Value>,
    classifier: Option<serde_json::Value>,
    grid: Option<Grid>,
    repeats: Option<usize>,
    subsample: Option<usize>,
    method: Option<String>,
}

/// Epoch budget used by the published runs.
pub fn default_epochs(dataset: &str, task: Task) -> usize {
    match (dataset, task) {
        (_, Task::Link) => 200,
        ("pokec_z" | "pokec_n", _) => 10_000,
        _ => 500,
    }
}

fn merge(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(serde_json::Value::Null), v);
            }
        }
        (slot, v) => *slot = v,
    }
}

impl ExperimentConfig {
    pub fn for_dataset(dataset: &str, task: Task) -> Self {
        let train = TrainConfig {
            epochs: default_epochs(dataset, task),
            loss_weights: LossWeights::for_dataset(dataset).unwrap_or_default(),
            ..TrainConfig::default()
        };
        ExperimentConfig {
            dataset: dataset.to_string(),
            task,
            train,
            classifier: ClassifierConfig::for_dataset(dataset),
            grid: None,
            repeats: 5,
            subsample: None,
            method: None,
        }
    }

    /// Reads a config file, filling unset fields from the dataset defaults.
    /// `dataset` and `task` override the file when given.
    pub fn load(path: &Path, dataset: Option<&str>, task: Option<Task>) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: ConfigFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let name = dataset
            .map(str::to_string)
            .or(file.dataset)
            .context("config names no dataset")?;
        let task = task.or(file.task).unwrap_or(Task::Node);
        let mut cfg = ExperimentConfig::for_dataset(&name, task);
        if let Some(patch) = file.train {
            let mut v = serde_json::to_value(cfg.train)?;
            merge(&mut v, patch);
            cfg.train = serde_json::from_value(v).context("train section")?;
        }
        if let Some(patch) = file.classifier {
            let mut v = serde_json::to_value(cfg.classifier)?;
            merge(&mut v, patch);
            cfg.classifier = serde_json::from_value(v).context("classifier section")?;
        }
        cfg.grid = file.grid;
        if let Some(r) = file.repeats {
            cfg.repeats = r;
        }
        cfg.subsample = file.subsample;
        cfg.method = file.method;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.train.validate()?;
        self.classifier.validate()?;
        if let Some(g) = &self.grid {
            g.validate()?;
        }
        if self.repeats == 0 {
            bail!("repeats must be > 0");
        }
        if self.subsample == Some(0) {
            bail!("subsample must be > 0");
        }
        Ok(())
    }

    /// Label for the results table.
    pub fn method_label(&self) -> String {
        if let Some(m) = &self.method {
            return m.clone();
        }
        match (self.train.ablate_ep, self.train.ablate_fm) {
            (false, false) => "Graphair".into(),
            (true, false) => "Graphair w/o EP".into(),
            (false, true) => "Graphair w/o FM".into(),
            (true, true) => "Graphair w/o EP+FM".into(),
        }
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?).with_context(|| format!("writing {}", path.display()))
    }
}

/// Data root: the explicit flag, else `$GRAPHAIR_DATA_DIR`, else `data`.
pub fn data_root(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data"))
}

/// Where a dataset lives and which manifest describes it.
#[derive(Debug, Clone)]
pub enum DatasetSource {
    Synthetic,
    Dir { dir: PathBuf, spec: DatasetSpec },
}

pub fn resolve_dataset(name: &str, root: &Path) -> anyhow::Result<DatasetSource> {
    if name == SYNTHETIC {
        return Ok(DatasetSource::Synthetic);
    }
    let dir = root.join(name);
    let manifest = dir.join(MANIFEST_FILE);
    let spec = if manifest.exists() {
        DatasetSpec::read_manifest(&manifest)?
    } else if let Some(spec) = DatasetSpec::builtin(name) {
        spec
    } else {
        bail!("unknown dataset {name:?} and no manifest at {}", manifest.display());
    };
    if !dir.join(&spec.node_file).exists() {
        bail!(
            "dataset {name:?} not found under {} (set --data-dir or {DATA_DIR_ENV})",
            dir.display()
        );
    }
    Ok(DatasetSource::Dir { dir, spec })
}

/// Loads and validates the raw graph of `name`.
pub fn load_graph(name: &str, root: &Path, seed: u64) -> anyhow::Result<Graph> {
    match resolve_dataset(name, root)? {
        DatasetSource::Synthetic => Ok(PlantedBias::default().generate(seed)?),
        DatasetSource::Dir { dir, spec } => {
            if dir.join(MANIFEST_FILE).exists() {
                Ok(load_dataset_dir(&dir)?.1)
            } else {
                Ok(load_dataset(&spec, &dir)?)
            }
        }
    }
}

/// The graph an experiment trains on: optional subsample, then node masks
/// for the node task.
pub fn prepare_graph(graph: Graph, cfg: &ExperimentConfig) -> anyhow::Result<Graph> {
    let seed = cfg.train.seed;
    let graph = match cfg.subsample {
        Some(size) if size < graph.num_nodes() => minibatch_subgraph(&graph, size, seed)?,
        _ => graph,
    };
    match cfg.task {
        Task::Node => {
            if graph.labels.is_none() {
                bail!("dataset {:?} has no labels; the node task needs them", cfg.dataset);
            }
            let masks = node_split(&graph, SplitRatios::NODE_DEFAULT, seed)?;
            Ok(graph.with_masks(masks)?)
        }
        Task::Link => Ok(graph),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_published_table() {
        let nba = ExperimentConfig::for_dataset("nba", Task::Node);
        assert_eq!(nba.train.epochs, 500);
        assert_eq!(nba.train.loss_weights, LossWeights::for_dataset("nba").unwrap());
        assert_eq!(ExperimentConfig::for_dataset("pokec_z", Task::Node).train.epochs, 10_000);
        assert_eq!(ExperimentConfig::for_dataset("citeseer", Task::Link).train.epochs, 200);
        assert_eq!(Grid::default().len(), 27);
    }

    #[test]
    fn file_patches_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(
            &path,
            r#"{"dataset":"nba","train":{"epochs":7,"loss_weights":{"gamma":2.0}},"repeats":2}"#,
        )
        .unwrap();
        let cfg = ExperimentConfig::load(&path, None, None).unwrap();
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.train.loss_weights.gamma, 2.0);
        assert_eq!(cfg.train.loss_weights.alpha, 1.0);
        assert_eq!(cfg.repeats, 2);
        let other = ExperimentConfig::load(&path, Some("cora"), Some(Task::Link)).unwrap();
        assert_eq!(other.dataset, "cora");
        assert_eq!(other.task, Task::Link);

        fs::write(&path, r#"{"dataset":"nba","bogus":1}"#).unwrap();
        assert!(ExperimentConfig::load(&path, None, None).is_err());
    }

    #[test]
    fn grid_rejects_nonpositive() {
        let g = Grid { alpha: vec![0.0], ..Grid::default() };
        assert!(g.validate().is_err());
        let g = Grid { gamma: vec![], ..Grid::default() };
        assert!(g.validate().is_err());
    }

    #[test]
    fn missing_dataset_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let err = resolve_dataset("nba", dir.path()).unwrap_err().to_string();
        assert!(err.contains("not found"), "{err}");
        assert!(resolve_dataset("nope", dir.path()).is_err());
        assert!(matches!(resolve_dataset(SYNTHETIC, dir.path()).unwrap(), DatasetSource::Synthetic));
    }
}
