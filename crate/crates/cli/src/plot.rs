//! SVG figures. Every plot is written next to a CSV of the plotted data.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use graphair::analysis::{HomophilyReport, SpearmanReport};
use graphair::evaluation::ResultsRow;
use plotters::coord::Shift;
use plotters::prelude::*;
use serde::{Deserialize, Serialize};

fn draw_err<E: std::fmt::Debug>(e: E) -> anyhow::Error {
    anyhow!("drawing failed: {e:?}")
}

/// One point of a fairness/accuracy trade-off plot, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub method: String,
    pub dataset: String,
    pub acc: f64,
    pub dp_m: f64,
    pub dp_s: Option<f64>,
}

/// Leading number of a `"mean ± std"` cell.
pub fn parse_mean(cell: &str) -> Option<f64> {
    cell.split('±').next()?.trim().parse().ok()
}

impl TradeoffPoint {
    pub fn from_row(row: &ResultsRow) -> anyhow::Result<Self> {
        let need = |name: &str, cell: &str| {
            parse_mean(cell).with_context(|| format!("{} / {}: bad {name} cell {cell:?}", row.method, row.dataset))
        };
        Ok(TradeoffPoint {
            method: row.method.clone(),
            dataset: row.dataset.clone(),
            acc: need("acc", &row.acc)?,
            dp_m: need("dp_m", &row.dp_m)?,
            dp_s: parse_mean(&row.dp_s),
        })
    }
}

pub fn read_results(path: &Path) -> anyhow::Result<Vec<ResultsRow>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    rdr.deserialize()
        .map(|r| r.with_context(|| format!("parsing {}", path.display())))
        .collect()
}

fn padded(lo: f64, hi: f64) -> std::ops::Range<f64> {
    let span = (hi - lo).abs().max(1.0);
    (lo - 0.1 * span)..(hi + 0.1 * span)
}

fn scatter_panel(
    area: &DrawingArea<SVGBackend<'_>, Shift>,
    title: &str,
    x_label: &str,
    pts: &[(String, f64, f64)],
) -> anyhow::Result<()> {
    let xs = pts.iter().map(|p| p.1);
    let ys = pts.iter().map(|p| p.2);
    let (x0, x1) = (xs.clone().fold(f64::INFINITY, f64::min), xs.fold(f64::NEG_INFINITY, f64::max));
    let (y0, y1) = (ys.clone().fold(f64::INFINITY, f64::min), ys.fold(f64::NEG_INFINITY, f64::max));
    let mut chart = ChartBuilder::on(area)
        .caption(title, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(48)
        .build_cartesian_2d(padded(x0.min(0.0), x1), padded(y0, y1))
        .map_err(draw_err)?;
    chart
        .configure_mesh()
        .x_desc(x_label)
        .y_desc("ACC (%)")
        .draw()
        .map_err(draw_err)?;
    for (i, (label, x, y)) in pts.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(std::iter::once(Circle::new((*x, *y), 5, color.filled())))
            .map_err(draw_err)?
            .label(label.as_str())
            .legend(move |(lx, ly)| Circle::new((lx, ly), 4, color.filled()));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(draw_err)?;
    Ok(())
}

/// ACC against ΔDP (and ΔDP_s when every point of a dataset has one),
/// one SVG per dataset plus `<stem>.csv`. Returns the written files.
pub fn plot_tradeoff(points: &[TradeoffPoint], out_dir: &Path, stem: &str) -> anyhow::Result<Vec<PathBuf>> {
    anyhow::ensure!(!points.is_empty(), "no points to plot");
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let csv_path = out_dir.join(format!("{stem}.csv"));
    let mut w = csv::Writer::from_path(&csv_path)?;
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    let mut written = vec![csv_path];

    let mut by_dataset: BTreeMap<&str, Vec<&TradeoffPoint>> = BTreeMap::new();
    for p in points {
        by_dataset.entry(p.dataset.as_str()).or_default().push(p);
    }
    for (dataset, pts) in by_dataset {
        let path = out_dir.join(format!("{stem}_{dataset}.svg"));
        let link = pts.iter().all(|p| p.dp_s.is_some());
        let width = if link { 1100 } else { 560 };
        {
            let root = SVGBackend::new(&path, (width, 440)).into_drawing_area();
            root.fill(&WHITE).map_err(draw_err)?;
            let dm: Vec<_> = pts.iter().map(|p| (p.method.clone(), p.dp_m, p.acc)).collect();
            if link {
                let panels = root.split_evenly((1, 2));
                scatter_panel(&panels[0], &format!("{dataset}: mixed dyadic"), "ΔDP_m (%)", &dm)?;
                let ds: Vec<_> = pts
                    .iter()
                    .map(|p| (p.method.clone(), p.dp_s.expect("checked"), p.acc))
                    .collect();
                scatter_panel(&panels[1], &format!("{dataset}: subgroup dyadic"), "ΔDP_s (%)", &ds)?;
            } else {
                scatter_panel(&root, dataset, "ΔDP (%)", &dm)?;
            }
            root.present().map_err(draw_err)?;
        }
        written.push(path);
    }
    Ok(written)
}

/// One evaluated checkpoint of an epoch sweep, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epoch: usize,
    pub acc: f64,
    pub acc_std: f64,
    pub dp: f64,
    pub eo: f64,
    pub auc: Option<f64>,
    pub dp_s: Option<f64>,
    pub eo_s: Option<f64>,
}

/// Accuracy and fairness gaps against epochs: `<stem>.csv` and `<stem>.svg`.
pub fn plot_sweep(rows: &[SweepRow], out_dir: &Path, stem: &str) -> anyhow::Result<Vec<PathBuf>> {
    anyhow::ensure!(!rows.is_empty(), "no sweep rows");
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let csv_path = out_dir.join(format!("{stem}.csv"));
    let mut w = csv::Writer::from_path(&csv_path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;

    let svg = out_dir.join(format!("{stem}.svg"));
    {
        let root = SVGBackend::new(&svg, (1000, 400)).into_drawing_area();
        root.fill(&WHITE).map_err(draw_err)?;
        let panels = root.split_evenly((1, 2));
        let e_max = rows.iter().map(|r| r.epoch).max().unwrap_or(1) as f64;
        let e_min = rows.iter().map(|r| r.epoch).min().unwrap_or(0) as f64;
        let series: [(&str, Vec<(f64, f64)>); 1] = [("ACC", rows.iter().map(|r| (r.epoch as f64, r.acc)).collect())];
        let gaps: Vec<(&str, Vec<(f64, f64)>)> = vec![
            ("ΔDP", rows.iter().map(|r| (r.epoch as f64, r.dp)).collect()),
            ("ΔEO", rows.iter().map(|r| (r.epoch as f64, r.eo)).collect()),
        ];
        for (panel, (title, lines)) in panels.iter().zip([("Accuracy", series.to_vec()), ("Fairness gaps", gaps)]) {
            let ys = lines.iter().flat_map(|(_, v)| v.iter().map(|p| p.1));
            let (y0, y1) = (ys.clone().fold(f64::INFINITY, f64::min), ys.fold(f64::NEG_INFINITY, f64::max));
            let mut chart = ChartBuilder::on(panel)
                .caption(title, ("sans-serif", 18))
                .margin(12)
                .x_label_area_size(36)
                .y_label_area_size(48)
                .build_cartesian_2d(padded(e_min, e_max), padded(y0.min(0.0), y1))
                .map_err(draw_err)?;
            chart.configure_mesh().x_desc("epoch").y_desc("%").draw().map_err(draw_err)?;
            for (i, (name, pts)) in lines.iter().enumerate() {
                let color = Palette99::pick(i).to_rgba();
                chart
                    .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
                    .map_err(draw_err)?
                    .label(*name)
                    .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
                chart
                    .draw_series(pts.iter().map(|&p| Circle::new(p, 3, color.filled())))
                    .map_err(draw_err)?;
            }
            chart
                .configure_series_labels()
                .background_style(WHITE.mix(0.8))
                .border_style(BLACK)
                .draw()
                .map_err(draw_err)?;
        }
        root.present().map_err(draw_err)?;
    }
    Ok(vec![csv_path, svg])
}

/// Node homophily histograms of the original and fair graphs side by
/// side: `<stem>.csv` (bin, lower, upper, original, fair) and `<stem>.svg`.
pub fn plot_homophily(report: &HomophilyReport, out_dir: &Path, stem: &str) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let bins = report.bins;
    let csv_path = out_dir.join(format!("{stem}.csv"));
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["bin", "lower", "upper", "original", "fair"])?;
    for b in 0..bins {
        w.write_record([
            b.to_string(),
            (b as f64 / bins as f64).to_string(),
            ((b + 1) as f64 / bins as f64).to_string(),
            report.original.histogram[b].to_string(),
            report.fair.histogram[b].to_string(),
        ])?;
    }
    w.flush()?;

    let svg = out_dir.join(format!("{stem}.svg"));
    {
        let root = SVGBackend::new(&svg, (1000, 400)).into_drawing_area();
        root.fill(&WHITE).map_err(draw_err)?;
        let panels = root.split_evenly((1, 2));
        let top = report
            .original
            .histogram
            .iter()
            .chain(&report.fair.histogram)
            .copied()
            .max()
            .unwrap_or(1)
            .max(1);
        for (panel, (name, summary, color)) in panels.iter().zip([
            ("Original", &report.original, BLUE),
            ("Fair view", &report.fair, RED),
        ]) {
            let mut chart = ChartBuilder::on(panel)
                .caption(format!("{name} (mean {:.3})", summary.mean), ("sans-serif", 18))
                .margin(12)
                .x_label_area_size(36)
                .y_label_area_size(48)
                .build_cartesian_2d(0.0..1.0, 0..(top + top / 10 + 1))
                .map_err(draw_err)?;
            chart
                .configure_mesh()
                .x_desc("node sensitive homophily")
                .y_desc("nodes")
                .draw()
                .map_err(draw_err)?;
            chart
                .draw_series(summary.histogram.iter().enumerate().map(|(b, &c)| {
                    let x0 = b as f64 / bins as f64;
                    let x1 = (b + 1) as f64 / bins as f64;
                    Rectangle::new([(x0, 0), (x1, c)], color.mix(0.6).filled())
                }))
                .map_err(draw_err)?;
        }
        root.present().map_err(draw_err)?;
    }
    Ok(vec![csv_path, svg])
}

/// `|rho|` of the top features, original against fair:
/// `<stem>.csv` (rank, feature, original, fair) and `<stem>.svg`.
pub fn plot_spearman(report: &SpearmanReport, out_dir: &Path, stem: &str) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let csv_path = out_dir.join(format!("{stem}.csv"));
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["rank", "feature", "original_abs_rho", "fair_abs_rho"])?;
    for (rank, &j) in report.top_features.iter().enumerate() {
        w.write_record([
            (rank + 1).to_string(),
            j.to_string(),
            report.original[j].rho.abs().to_string(),
            report.fair[j].rho.abs().to_string(),
        ])?;
    }
    w.flush()?;

    let svg = out_dir.join(format!("{stem}.svg"));
    {
        let k = report.top_features.len().max(1);
        let root = SVGBackend::new(&svg, (720, 400)).into_drawing_area();
        root.fill(&WHITE).map_err(draw_err)?;
        let top = report
            .top_features
            .iter()
            .map(|&j| report.original[j].rho.abs().max(report.fair[j].rho.abs()))
            .fold(0.0, f64::max)
            .max(1e-3);
        let mut chart = ChartBuilder::on(&root)
            .caption("Spearman |ρ| with the sensitive attribute", ("sans-serif", 18))
            .margin(12)
            .x_label_area_size(36)
            .y_label_area_size(48)
            .build_cartesian_2d(0.0..k as f64, 0.0..top * 1.15)
            .map_err(draw_err)?;
        let labels: Vec<String> = report.top_features.iter().map(|j| format!("f{j}")).collect();
        chart
            .configure_mesh()
            .disable_x_mesh()
            .x_labels(k)
            .x_label_formatter(&|x| {
                let i = x.floor() as usize;
                labels.get(i).cloned().unwrap_or_default()
            })
            .y_desc("|ρ|")
            .draw()
            .map_err(draw_err)?;
        for (offset, name, color, get) in [
            (0.1, "original", BLUE, &(|j: usize| report.original[j].rho.abs()) as &dyn Fn(usize) -> f64),
            (0.5, "fair", RED, &|j: usize| report.fair[j].rho.abs()),
        ] {
            chart
                .draw_series(report.top_features.iter().enumerate().map(|(i, &j)| {
                    let x = i as f64 + offset;
                    Rectangle::new([(x, 0.0), (x + 0.4, get(j))], color.mix(0.7).filled())
                }))
                .map_err(draw_err)?
                .label(name)
                .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 10, y + 5)], color.filled()));
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(draw_err)?;
        root.present().map_err(draw_err)?;
    }
    Ok(vec![csv_path, svg])
}
