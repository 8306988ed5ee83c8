//! Command-line interface.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use graphair::evaluation::append_results;
use graphair::seed::set_global_seed;
use log::info;

use crate::analyze::{analyze, default_batch_size};
use crate::config::{data_root, ExperimentConfig, Task};
use crate::data::{check_dataset, convert};
use crate::experiment::{run_experiment, write_json, RESULTS_FILE};
use crate::grid::{grid_search, save_grid, Runner, SelectionRule};
use crate::plot::{plot_tradeoff, read_results, TradeoffPoint};
use crate::sweep::epoch_sweep;

#[derive(Debug, Parser)]
#[command(name = "graphair", version, about = "Fair graph augmentation experiments")]
pub struct Cli {
    /// Seed for every stochastic step; recorded in all artifacts.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory with one sub-directory per dataset
    /// (default: $GRAPHAIR_DATA_DIR, then ./data).
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long, value_enum)]
    pub task: Option<Task>,
    /// JSON config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Disable edge perturbation.
    #[arg(long)]
    pub no_ep: bool,
    /// Disable feature masking.
    #[arg(long)]
    pub no_fm: bool,
    /// Classifier seeds per evaluation.
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Train and evaluate on a random induced subgraph of this many nodes.
    #[arg(long)]
    pub subsample: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Ep,
    Fm,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train, evaluate and write one trial.
    Run(ExperimentArgs),
    /// Search alpha, gamma and lambda and select the best cell.
    Grid {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Cells run concurrently as worker processes.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Percentage-point slack of the selection rule.
        #[arg(long, default_value_t = 1.0)]
        slack: f64,
    },
    /// Full model and its ablations, written as one results table.
    Ablate {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Components to remove; both when omitted.
        #[arg(long, value_enum, value_delimiter = ',')]
        which: Vec<Which>,
    },
    /// Evaluate checkpoints across training budgets.
    SweepEpochs {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Comma-separated epochs; the configured budget when omitted.
        #[arg(long, value_delimiter = ',')]
        at: Vec<usize>,
    },
    /// Homophily and Spearman analyses of the fair view.
    Analyze {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Analyse a node mini-batch of this size (default 1000 for Pokec).
        #[arg(long)]
        batch_size: Option<usize>,
        /// Trial directory to analyse; trained first when it has no
        /// checkpoint.
        #[arg(long)]
        trial: Option<PathBuf>,
    },
    /// Accuracy/fairness trade-off plots from results CSVs.
    Plot {
        #[arg(required = true)]
        results: Vec<PathBuf>,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
        #[arg(long, default_value = "tradeoff")]
        stem: String,
    },
    /// Check datasets against their published statistics.
    ValidateData {
        /// Datasets to check; all six when omitted.
        #[arg(long = "dataset")]
        datasets: Vec<String>,
        /// Write the checks as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert native dataset files into the canonical layout.
    Convert {
        #[arg(long)]
        dataset: String,
        /// Node CSV (social datasets) or `.content` file (citation).
        #[arg(long)]
        nodes: PathBuf,
        /// Relationship file (social) or `.cites` file (citation).
        #[arg(long)]
        edges: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Builds the experiment config from a file and/or flags.
pub fn build_config(args: &ExperimentArgs, seed: Option<u64>) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path, args.dataset.as_deref(), args.task)?,
        None => {
            let name = args.dataset.as_deref().context("--dataset or --config is required")?;
            ExperimentConfig::for_dataset(name, args.task.unwrap_or(Task::Node))
        }
    };
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    cfg.train.ablate_ep |= args.no_ep;
    cfg.train.ablate_fm |= args.no_fm;
    if let Some(r) = args.repeats {
        cfg.repeats = r;
    }
    if args.subsample.is_some() {
        cfg.subsample = args.subsample;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn default_out(cfg: &ExperimentConfig, verb: &str) -> PathBuf {
    let task = match cfg.task {
        Task::Node => "node",
        Task::Link => "link",
    };
    PathBuf::from("runs").join(format!("{}_{task}_seed{}_{verb}", cfg.dataset, cfg.train.seed))
}

fn out_dir(args: &ExperimentArgs, cfg: &ExperimentConfig, verb: &str) -> PathBuf {
    args.out.clone().unwrap_or_else(|| default_out(cfg, verb))
}

fn print_summary(report: &crate::experiment::ExperimentReport) {
    let row = report.results_row();
    println!(
        "{} {}: acc {} auc {} dp_m {} eo_m {} dp_s {} eo_s {}",
        row.method,
        row.dataset,
        row.acc,
        if row.auc.is_empty() { "-" } else { &row.auc },
        row.dp_m,
        row.eo_m,
        if row.dp_s.is_empty() { "-" } else { &row.dp_s },
        if row.eo_s.is_empty() { "-" } else { &row.eo_s },
    );
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let root = data_root(cli.data_dir.as_deref());
    let seed = cli.seed;
    if let Some(s) = seed {
        set_global_seed(s);
    }
    match cli.command {
        Command::Run(args) => {
            let cfg = build_config(&args, seed)?;
            let out = out_dir(&args, &cfg, "run");
            let report = run_experiment(&cfg, &root, &out)?;
            print_summary(&report);
            println!("trial written to {}", out.display());
        }
        Command::Grid { exp, jobs, slack } => {
            let mut cfg = build_config(&exp, seed)?;
            cfg.grid.get_or_insert_with(Default::default);
            let out = out_dir(&exp, &cfg, "grid");
            let runner = if jobs > 1 {
                Runner::Processes {
                    exe: std::env::current_exe()?,
                    jobs,
                }
            } else {
                Runner::InProcess
            };
            let result = grid_search(&cfg, &root, &out, &runner, SelectionRule::MaxAccWithinSlack { slack })?;
            save_grid(&result, &out)?;
            let failed = result.cells.iter().filter(|c| c.report.is_none()).count();
            println!("{} cells, {} failed, rule {}", result.cells.len(), failed, result.rule_id);
            match result.best_outcome() {
                Some(best) => {
                    let c = best.cell;
                    println!("best: alpha {} gamma {} lambda {}", c.alpha, c.gamma, c.lambda);
                    if let Some(r) = &best.report {
                        print_summary(r);
                        append_results(&out.join(RESULTS_FILE), &[r.results_row()])?;
                    }
                }
                None => bail!("every grid cell failed"),
            }
        }
        Command::Ablate { exp, which } => {
            let base = build_config(&exp, seed)?;
            let out = out_dir(&exp, &base, "ablate");
            let which = if which.is_empty() { vec![Which::Ep, Which::Fm] } else { which };
            let mut variants = vec![("full", base.clone())];
            for w in which {
                let mut cfg = base.clone();
                match w {
                    Which::Ep => cfg.train.ablate_ep = true,
                    Which::Fm => cfg.train.ablate_fm = true,
                }
                variants.push((if w == Which::Ep { "no_ep" } else { "no_fm" }, cfg));
            }
            let table = out.join(RESULTS_FILE);
            if table.exists() {
                std::fs::remove_file(&table)?;
            }
            for (name, cfg) in variants {
                let report = run_experiment(&cfg, &root, &out.join(name))?;
                print_summary(&report);
                append_results(&table, &[report.results_row()])?;
            }
            println!("table written to {}", table.display());
        }
        Command::SweepEpochs { exp, at } => {
            let cfg = build_config(&exp, seed)?;
            let out = out_dir(&exp, &cfg, "sweep");
            for r in epoch_sweep(&cfg, &root, &out, &at)? {
                let h = r.headline();
                println!("epoch {}: acc {:.2} dp {:.2} eo {:.2}", r.epoch, h.acc, h.dp, h.eo);
            }
            println!("curves written to {}", out.join("sweep.csv").display());
        }
        Command::Analyze { exp, batch_size, trial } => {
            let cfg = build_config(&exp, seed)?;
            let out = out_dir(&exp, &cfg, "analyze");
            let trial = trial.unwrap_or_else(|| out.join("trial"));
            let batch = batch_size.or_else(|| default_batch_size(&cfg.dataset));
            let (report, files) = analyze(&cfg, &root, &trial, batch, &out)?;
            println!(
                "homophily mean: original {:.4}, fair {:.4}",
                report.homophily.original.mean, report.homophily.fair.mean
            );
            println!(
                "top-{} features with lower |rho| in the fair view: {}",
                report.spearman.top_features.len(),
                report.spearman.reduced_in_fair
            );
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::Plot { results, out, stem } => {
            let mut points = Vec::new();
            for path in &results {
                for row in read_results(path)? {
                    points.push(TradeoffPoint::from_row(&row)?);
                }
            }
            for f in plot_tradeoff(&points, &out, &stem)? {
                println!("wrote {}", f.display());
            }
        }
        Command::ValidateData { datasets, out } => {
            let names: Vec<String> = if datasets.is_empty() {
                graphair::graph::DatasetSpec::BUILTIN_NAMES.iter().map(|s| s.to_string()).collect()
            } else {
                datasets
            };
            let checks: Vec<_> = names.iter().map(|n| check_dataset(n, &root)).collect();
            for c in &checks {
                let fmt = |v: Option<[usize; 4]>| v.map(|a| format!("{a:?}")).unwrap_or_else(|| "-".into());
                let status = match &c.status {
                    crate::data::DataStatus::Ok => "ok".to_string(),
                    crate::data::DataStatus::Missing { reason } => format!("missing: {reason}"),
                    crate::data::DataStatus::Mismatch { reason } => format!("mismatch: {reason}"),
                };
                println!("{:<10} expected {:<28} found {:<28} {status}", c.name, fmt(c.expected), fmt(c.found));
            }
            if let Some(path) = out {
                write_json(&path, &checks)?;
            }
            let bad = checks.iter().filter(|c| !c.is_ok()).count();
            if bad > 0 {
                bail!("{bad} of {} datasets failed validation", checks.len());
            }
        }
        Command::Convert { dataset, nodes, edges, out } => {
            let spec = convert(&dataset, &nodes, &edges, &out)?;
            info!("converted {dataset} into {}", out.display());
            println!("wrote {} ({:?})", out.display(), spec.expected_stats);
        }
    }
    Ok(())
}

/// Parses `args` and runs the command.
pub fn run_from<I, T>(args: I) -> anyhow::Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run(Cli::try_parse_from(args)?)
}
