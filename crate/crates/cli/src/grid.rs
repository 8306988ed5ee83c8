//! Grid search over the loss weights `alpha`, `gamma` and `lambda`.
//!
//! Each cell is a full trial in `<out>/cells/<cell id>/`. A cell runs in a
//! `.partial` directory that is renamed into place only after its report
//! is written, so a finished directory is always complete and an
//! interrupted search can be resumed. Failed cells keep their artifacts
//! under `<cell id>.failed/`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Child, Command};
use std::thread;
use std::time::Duration;

use anyhow::{bail, Context};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Grid, Task};
use crate::experiment::{read_json, run_experiment, write_json, ExperimentReport, Headline, REPORT_FILE};

pub const GRID_FILE: &str = "grid.json";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub alpha: f64,
    pub gamma: f64,
    pub lambda: f64,
}

impl Cell {
    pub fn id(&self) -> String {
        format!("alpha{}_gamma{}_lambda{}", self.alpha, self.gamma, self.lambda)
    }

    /// `base` with this cell's loss weights and no grid.
    pub fn config(&self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut cfg = base.clone();
        cfg.grid = None;
        cfg.train.loss_weights.alpha = self.alpha;
        cfg.train.loss_weights.gamma = self.gamma;
        cfg.train.loss_weights.lambda = self.lambda;
        cfg
    }
}

/// Cells in lexicographic `(alpha, gamma, lambda)` order.
pub fn cells(grid: &Grid) -> Vec<Cell> {
    let mut out = Vec::with_capacity(grid.len());
    for &alpha in &grid.alpha {
        for &gamma in &grid.gamma {
            for &lambda in &grid.lambda {
                out.push(Cell { alpha, gamma, lambda });
            }
        }
    }
    out
}

/// How the best cell is picked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SelectionRule {
    /// Highest accuracy among cells whose ΔDP and ΔEO are each within
    /// `slack` percentage points of the grid minimum. If no cell meets
    /// both bounds, the cell with the smallest worst-case excess wins.
    MaxAccWithinSlack { slack: f64 },
}

impl Default for SelectionRule {
    fn default() -> Self {
        SelectionRule::MaxAccWithinSlack { slack: 1.0 }
    }
}

impl SelectionRule {
    pub fn id(&self) -> String {
        match self {
            SelectionRule::MaxAccWithinSlack { slack } => format!("max_acc_within_slack:{slack}"),
        }
    }

    /// Index of the chosen entry, and whether the fallback was used.
    /// Ties go to the earlier entry.
    pub fn select(&self, scores: &[Headline]) -> Option<(usize, bool)> {
        let SelectionRule::MaxAccWithinSlack { slack } = *self;
        if scores.is_empty() {
            return None;
        }
        let min_dp = scores.iter().map(|h| h.dp).fold(f64::INFINITY, f64::min);
        let min_eo = scores.iter().map(|h| h.eo).fold(f64::INFINITY, f64::min);
        let mut best: Option<usize> = None;
        for (i, h) in scores.iter().enumerate() {
            if h.dp <= min_dp + slack && h.eo <= min_eo + slack && best.is_none_or(|b| h.acc > scores[b].acc) {
                best = Some(i);
            }
        }
        if let Some(b) = best {
            return Some((b, false));
        }
        let excess = |h: &Headline| (h.dp - min_dp).max(h.eo - min_eo);
        let mut b = 0;
        for (i, h) in scores.iter().enumerate().skip(1) {
            let (e, eb) = (excess(h), excess(&scores[b]));
            if e < eb || (e == eb && h.acc > scores[b].acc) {
                b = i;
            }
        }
        Some((b, true))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub cell: Cell,
    pub dir: PathBuf,
    pub report: Option<ExperimentReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub dataset: String,
    pub task: Task,
    pub seed: u64,
    pub rule: SelectionRule,
    pub rule_id: String,
    pub cells: Vec<CellOutcome>,
    pub best: Option<Cell>,
    pub best_by_fallback: bool,
}

impl GridResult {
    pub fn best_outcome(&self) -> Option<&CellOutcome> {
        let best = self.best?;
        self.cells.iter().find(|c| c.cell == best)
    }
}

/// Where cells execute.
#[derive(Debug, Clone)]
pub enum Runner {
    InProcess,
    /// Worker processes of the given binary, invoked as
    /// `<exe> run --config <file> --out <dir> --data-dir <root>`.
    Processes { exe: PathBuf, jobs: usize },
}

fn cell_dirs(out: &Path, cell: &Cell) -> (PathBuf, PathBuf, PathBuf) {
    let root = out.join("cells");
    let id = cell.id();
    (
        root.join(&id),
        root.join(format!("{id}.partial")),
        root.join(format!("{id}.failed")),
    )
}

fn reset_dir(path: &Path) -> anyhow::Result<()> {
    if path.exists() {
        fs::remove_dir_all(path).with_context(|| format!("removing {}", path.display()))?;
    }
    Ok(())
}

/// Moves a finished `.partial` directory into its final place, or into
/// `.failed` when it holds no report.
fn settle(cell: &Cell, out: &Path) -> anyhow::Result<bool> {
    let (done, partial, failed) = cell_dirs(out, cell);
    let ok = partial.join(REPORT_FILE).exists();
    let target = if ok { &done } else { &failed };
    reset_dir(target)?;
    if partial.exists() {
        fs::rename(&partial, target).with_context(|| format!("renaming {}", partial.display()))?;
    }
    Ok(ok)
}

fn spawn(exe: &Path, cfg_path: &Path, dir: &Path, data_root: &Path) -> anyhow::Result<Child> {
    Command::new(exe)
        .arg("run")
        .arg("--config")
        .arg(cfg_path)
        .arg("--out")
        .arg(dir)
        .arg("--data-dir")
        .arg(data_root)
        .spawn()
        .with_context(|| format!("spawning {}", exe.display()))
}

/// Runs every cell not already finished under `out`, then collects all
/// cells and selects the best one.
pub fn grid_search(
    base: &ExperimentConfig,
    data_root: &Path,
    out: &Path,
    runner: &Runner,
    rule: SelectionRule,
) -> anyhow::Result<GridResult> {
    base.validate()?;
    let grid = base.grid.clone().unwrap_or_default();
    grid.validate()?;
    if grid.is_empty() {
        bail!("empty grid");
    }
    let all = cells(&grid);
    fs::create_dir_all(out.join("cells")).with_context(|| format!("creating {}", out.display()))?;
    let pending: Vec<Cell> = all
        .iter()
        .copied()
        .filter(|c| !cell_dirs(out, c).0.join(REPORT_FILE).exists())
        .collect();
    info!("grid: {} cells, {} to run", all.len(), pending.len());

    let mut errors: Vec<(Cell, String)> = Vec::new();
    match runner {
        Runner::InProcess => {
            for cell in &pending {
                let (_, partial, _) = cell_dirs(out, cell);
                reset_dir(&partial)?;
                info!("cell {}", cell.id());
                if let Err(e) = run_experiment(&cell.config(base), data_root, &partial) {
                    warn!("cell {} failed: {e:#}", cell.id());
                    errors.push((*cell, format!("{e:#}")));
                }
                settle(cell, out)?;
            }
        }
        Runner::Processes { exe, jobs } => {
            let jobs = (*jobs).max(1);
            let mut queue = pending.iter().rev().copied().collect::<Vec<_>>();
            let mut running: Vec<(Cell, Child)> = Vec::new();
            while !queue.is_empty() || !running.is_empty() {
                while running.len() < jobs {
                    let Some(cell) = queue.pop() else { break };
                    let (_, partial, _) = cell_dirs(out, &cell);
                    reset_dir(&partial)?;
                    fs::create_dir_all(&partial)?;
                    let cfg_path = partial.join("cell_config.json");
                    write_json(&cfg_path, &cell.config(base))?;
                    info!("cell {} dispatched", cell.id());
                    running.push((cell, spawn(exe, &cfg_path, &partial, data_root)?));
                }
                let mut i = 0;
                while i < running.len() {
                    if let Some(status) = running[i].1.try_wait()? {
                        let (cell, _) = running.swap_remove(i);
                        if !status.success() {
                            warn!("cell {} exited with {status}", cell.id());
                            errors.push((cell, format!("worker exited with {status}")));
                        }
                        settle(&cell, out)?;
                    } else {
                        i += 1;
                    }
                }
                if !running.is_empty() {
                    thread::sleep(Duration::from_millis(100));
                }
            }
        }
    }

    let mut outcomes = Vec::with_capacity(all.len());
    for cell in &all {
        let (done, _, failed) = cell_dirs(out, cell);
        let rel = |p: &Path| p.strip_prefix(out).unwrap_or(p).to_path_buf();
        let report_path = done.join(REPORT_FILE);
        if report_path.exists() {
            outcomes.push(CellOutcome {
                cell: *cell,
                dir: rel(&done),
                report: Some(read_json(&report_path)?),
                error: None,
            });
        } else {
            let error = errors
                .iter()
                .find(|(c, _)| c == cell)
                .map(|(_, e)| e.clone())
                .unwrap_or_else(|| "no report".into());
            outcomes.push(CellOutcome {
                cell: *cell,
                dir: rel(&failed),
                report: None,
                error: Some(error),
            });
        }
    }
    Ok(assemble(base, outcomes, rule))
}

/// Builds a [`GridResult`] from per-cell outcomes, in cell order.
pub fn assemble(base: &ExperimentConfig, mut outcomes: Vec<CellOutcome>, rule: SelectionRule) -> GridResult {
    let key = |c: &Cell| (c.alpha, c.gamma, c.lambda);
    outcomes.sort_by(|a, b| key(&a.cell).partial_cmp(&key(&b.cell)).expect("finite grid values"));
    let ok: Vec<(Cell, Headline)> = outcomes
        .iter()
        .filter_map(|o| o.report.as_ref().map(|r| (o.cell, r.headline())))
        .collect();
    let scores: Vec<Headline> = ok.iter().map(|(_, h)| *h).collect();
    let chosen = rule.select(&scores);
    GridResult {
        dataset: base.dataset.clone(),
        task: base.task,
        seed: base.train.seed,
        rule,
        rule_id: rule.id(),
        cells: outcomes,
        best: chosen.map(|(i, _)| ok[i].0),
        best_by_fallback: chosen.is_some_and(|(_, f)| f),
    }
}

pub fn save_grid(result: &GridResult, out: &Path) -> anyhow::Result<()> {
    write_json(&out.join(GRID_FILE), result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(acc: f64, dp: f64, eo: f64) -> Headline {
        Headline { acc, dp, eo }
    }

    #[test]
    fn default_grid_has_27_distinct_cells() {
        let c = cells(&Grid::default());
        assert_eq!(c.len(), 27);
        let mut ids: Vec<String> = c.iter().map(Cell::id).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 27);
    }

    #[test]
    fn rule_prefers_accuracy_within_slack() {
        let rule = SelectionRule::default();
        let s = [h(70.0, 5.0, 5.0), h(68.0, 1.5, 2.0), h(69.0, 1.0, 2.9), h(66.0, 1.0, 2.0)];
        assert_eq!(rule.select(&s), Some((2, false)));
        let wide = SelectionRule::MaxAccWithinSlack { slack: 10.0 };
        assert_eq!(wide.select(&s), Some((0, false)));
        assert_eq!(rule.select(&[]), None);
    }

    #[test]
    fn rule_falls_back_when_no_cell_meets_both_bounds() {
        let rule = SelectionRule::MaxAccWithinSlack { slack: 0.5 };
        let s = [h(70.0, 0.0, 9.0), h(60.0, 9.0, 0.0), h(65.0, 4.0, 4.0)];
        assert_eq!(rule.select(&s), Some((2, true)));
    }

    #[test]
    fn assembly_ignores_outcome_order() {
        let base = ExperimentConfig::for_dataset("nba", Task::Node);
        let mk = |a: f64| CellOutcome {
            cell: Cell { alpha: a, gamma: 1.0, lambda: 1.0 },
            dir: PathBuf::from(a.to_string()),
            report: None,
            error: Some("x".into()),
        };
        let fwd = assemble(&base, vec![mk(0.1), mk(1.0), mk(10.0)], SelectionRule::default());
        let rev = assemble(&base, vec![mk(10.0), mk(0.1), mk(1.0)], SelectionRule::default());
        assert_eq!(fwd, rev);
        assert_eq!(fwd.best, None);
    }
}
