//! Accuracy and fairness as a function of the training budget.

use std::path::Path;

use anyhow::bail;
use graphair::trainer::TrialOutput;
use log::info;

use crate::config::ExperimentConfig;
use crate::experiment::{evaluate_checkpoint, list_checkpoints, read_json, run_experiment_with, ExperimentReport, CONFIG_FILE};
use crate::plot::{plot_sweep, SweepRow};

impl From<&ExperimentReport> for SweepRow {
    fn from(r: &ExperimentReport) -> Self {
        let p = r.primary();
        SweepRow {
            epoch: r.epoch,
            acc: p.acc.mean,
            acc_std: p.acc.std,
            dp: p.dp.mean,
            eo: p.eo.mean,
            auc: p.auc.map(|a| a.mean),
            dp_s: r.link_subgroup.as_ref().map(|s| s.dp.mean),
            eo_s: r.link_subgroup.as_ref().map(|s| s.eo.mean),
        }
    }
}

/// Evaluates the trial in `dir` at each of `epochs` (the configured budget
/// when empty).
///
/// An existing trial with the same config and all needed checkpoints is
/// reused; otherwise one run of `max(epochs)` epochs is trained with a
/// checkpoint at every requested epoch. Writes `sweep.csv` and `sweep.svg`
/// into `dir`.
pub fn epoch_sweep(
    cfg: &ExperimentConfig,
    data_root: &Path,
    dir: &Path,
    epochs: &[usize],
) -> anyhow::Result<Vec<ExperimentReport>> {
    let mut epochs = epochs.to_vec();
    if epochs.is_empty() {
        epochs.push(cfg.train.epochs);
    }
    epochs.sort_unstable();
    epochs.dedup();
    if epochs[0] == 0 {
        bail!("epoch 0 has no checkpoint");
    }
    let mut cfg = cfg.clone();
    cfg.train.epochs = *epochs.last().expect("non-empty");

    let reusable = dir.join(CONFIG_FILE).exists()
        && read_json::<ExperimentConfig>(&dir.join(CONFIG_FILE)).is_ok_and(|c| c == cfg)
        && list_checkpoints(dir).is_ok_and(|cps| epochs.iter().all(|e| cps.iter().any(|(c, _)| c == e)));
    if reusable {
        info!("sweep: reusing checkpoints in {}", dir.display());
    } else {
        run_experiment_with(&cfg, data_root, dir, &epochs)?;
    }

    let trial = TrialOutput::new(dir, cfg.dataset.clone());
    let mut reports = Vec::with_capacity(epochs.len());
    for &e in &epochs {
        let r = evaluate_checkpoint(dir, &trial.checkpoint_path(e), data_root)?;
        info!("sweep epoch {e}: acc {:.2} dp {:.2} eo {:.2}", r.headline().acc, r.headline().dp, r.headline().eo);
        reports.push(r);
    }
    let rows: Vec<SweepRow> = reports.iter().map(SweepRow::from).collect();
    plot_sweep(&rows, dir, "sweep")?;
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Task;
    use crate::experiment::{run_experiment, testutil::tiny};

    #[test]
    fn final_epoch_sweep_equals_run() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(Task::Node);
        let run = run_experiment(&cfg, dir.path(), &dir.path().join("run")).unwrap();
        let sweep = epoch_sweep(&cfg, dir.path(), &dir.path().join("sweep"), &[cfg.train.epochs]).unwrap();
        assert_eq!(sweep, vec![run]);
        assert!(dir.path().join("sweep/sweep.csv").exists());
        assert!(dir.path().join("sweep/sweep.svg").exists());
    }

    #[test]
    fn sweep_trains_once_and_reuses() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(Task::Node);
        let out = dir.path().join("s");
        let a = epoch_sweep(&cfg, dir.path(), &out, &[3, 1, 5]).unwrap();
        assert_eq!(a.iter().map(|r| r.epoch).collect::<Vec<_>>(), vec![1, 3, 5]);
        let stamp = std::fs::metadata(out.join("metrics.csv")).unwrap().modified().unwrap();
        let b = epoch_sweep(&cfg, dir.path(), &out, &[1, 5]).unwrap();
        assert_eq!(std::fs::metadata(out.join("metrics.csv")).unwrap().modified().unwrap(), stamp);
        assert_eq!(b, vec![a[0].clone(), a[2].clone()]);
        let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
        assert_eq!(csv.lines().count(), 3);
    }
}
