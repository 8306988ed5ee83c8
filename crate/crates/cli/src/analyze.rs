//! Homophily and feature-correlation analyses of a trained augmenter.

use std::path::{Path, PathBuf};

use anyhow::Context;
use graphair::analysis::{claim3_report, Claim3Report};
use graphair::models::augment;
use graphair::seed::derive_rng;
use graphair::trainer::{load_checkpoint, TrialOutput};
use log::info;

use crate::config::ExperimentConfig;
use crate::experiment::{run_experiment, trial_data, write_json};
use crate::plot::{plot_homophily, plot_spearman};

pub const ANALYSIS_FILE: &str = "claim3.json";

/// Mini-batch size used when none is given: 1,000 nodes for the Pokec
/// graphs, the whole graph otherwise.
pub fn default_batch_size(dataset: &str) -> Option<usize> {
    dataset.starts_with("pokec").then_some(1_000)
}

/// Analyses the final checkpoint of the trial in `trial` (training it
/// first if it has none) against one fair view drawn from `g`. Writes
/// `claim3.json` and the homophily / Spearman figures into `out`.
pub fn analyze(
    cfg: &ExperimentConfig,
    data_root: &Path,
    trial: &Path,
    batch_size: Option<usize>,
    out: &Path,
) -> anyhow::Result<(Claim3Report, Vec<PathBuf>)> {
    let ckpt = TrialOutput::new(trial, cfg.dataset.clone()).final_checkpoint_path();
    if !ckpt.exists() {
        info!("no checkpoint in {}; training first", trial.display());
        run_experiment(cfg, data_root, trial)?;
    }
    let (models, train_cfg, _) = load_checkpoint(&ckpt)?;
    let data = trial_data(cfg, data_root)?;
    let seed = cfg.train.seed;
    let view = augment(
        &models.augmentor,
        &data.graph,
        train_cfg.model.dense_threshold,
        &mut derive_rng(seed, "analysis-view"),
        train_cfg.ablation(),
    )?;
    let report = claim3_report(&data.graph, &view, batch_size, seed)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join(ANALYSIS_FILE);
    write_json(&path, &report)?;
    let mut files = vec![path];
    files.extend(plot_homophily(&report.homophily, out, "homophily")?);
    files.extend(plot_spearman(&report.spearman, out, "spearman")?);
    info!(
        "homophily mean {:.4} -> {:.4}; {}/{} top features less correlated",
        report.homophily.original.mean,
        report.homophily.fair.mean,
        report.spearman.reduced_in_fair,
        report.spearman.top_features.len()
    );
    Ok((report, files))
}
