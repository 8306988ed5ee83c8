//! Dataset manifests and ingestion of the canonical on-disk format.
//!
//! A dataset directory holds three files:
//!
//! * `nodes.csv` with a header row, an `id` column, numeric feature columns,
//!   the sensitive column and optionally a label column;
//! * `edges.csv` with header `src,dst`, one undirected edge per row in
//!   `(min, max)` order, endpoints given as node ids;
//! * `manifest.json`, a serialized [`DatasetSpec`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// How a dataset's published edge count is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeConvention {
    /// Unique unordered pairs, self-loops excluded.
    Undirected,
    /// Nonzeros of the symmetric adjacency, i.e. twice the undirected count.
    Directed,
    /// Rows of the native relationship file before symmetrization and
    /// deduplication. The converter records that number in the manifest
    /// (`native_edge_rows`) because the canonical edge file stores each
    /// undirected edge once.
    NativeRows,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedStats {
    pub nodes: usize,
    pub edges: usize,
    pub features: usize,
    pub sensitive_groups: usize,
}

/// Everything needed to load and validate one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    #[serde(default = "default_node_file")]
    pub node_file: PathBuf,
    #[serde(default = "default_edge_file")]
    pub edge_file: PathBuf,
    #[serde(default = "default_id_column")]
    pub id_column: String,
    pub sensitive_column: String,
    #[serde(default)]
    pub label_column: Option<String>,
    /// Extra columns dropped from `X` besides id, sensitive and label.
    #[serde(default)]
    pub exclude_columns: Vec<String>,
    pub expected_stats: ExpectedStats,
    pub edge_convention: EdgeConvention,
    #[serde(default)]
    pub native_edge_rows: Option<usize>,
    /// Z-score every feature column after loading.
    #[serde(default)]
    pub standardize: bool,
}

fn default_node_file() -> PathBuf {
    PathBuf::from("nodes.csv")
}
fn default_edge_file() -> PathBuf {
    PathBuf::from("edges.csv")
}
fn default_id_column() -> String {
    "id".to_string()
}

impl DatasetSpec {
    /// Built-in manifest for one of the six benchmark datasets.
    pub fn builtin(name: &str) -> Option<DatasetSpec> {
        let (sens, label, stats, conv) = match name {
            "nba" => ("country", Some("SALARY"), (403, 16_570, 39, 2), EdgeConvention::NativeRows),
            "pokec_z" => ("region", Some("I_am_working_in_field"), (67_797, 882_765, 59, 2), EdgeConvention::NativeRows),
            "pokec_n" => ("region", Some("I_am_working_in_field"), (66_569, 729_129, 59, 2), EdgeConvention::NativeRows),
            "citeseer" => ("class", None, (3_327, 9_104, 3_703, 6), EdgeConvention::Directed),
            "cora" => ("class", None, (2_708, 10_556, 1_433, 7), EdgeConvention::Directed),
            "pubmed" => ("class", None, (19_717, 88_648, 500, 3), EdgeConvention::Directed),
            _ => return None,
        };
        Some(DatasetSpec {
            name: name.to_string(),
            node_file: default_node_file(),
            edge_file: default_edge_file(),
            id_column: default_id_column(),
            sensitive_column: sens.to_string(),
            label_column: label.map(str::to_string),
            exclude_columns: Vec::new(),
            expected_stats: ExpectedStats {
                nodes: stats.0,
                edges: stats.1,
                features: stats.2,
                sensitive_groups: stats.3,
            },
            edge_convention: conv,
            native_edge_rows: None,
            standardize: false,
        })
    }

    pub const BUILTIN_NAMES: [&'static str; 6] =
        ["nba", "pokec_z", "pokec_n", "citeseer", "cora", "pubmed"];

    pub fn read_manifest(path: &Path) -> Result<DatasetSpec> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write_manifest(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Edge count of `graph` under this dataset's convention.
    pub fn count_edges(&self, graph: &Graph) -> usize {
        match self.edge_convention {
            EdgeConvention::Undirected => graph.num_edges(),
            EdgeConvention::Directed => 2 * graph.num_edges(),
            EdgeConvention::NativeRows => self.native_edge_rows.unwrap_or(graph.num_edges()),
        }
    }

    /// Compares `graph` against `expected_stats`, naming the first
    /// offending field.
    pub fn check_stats(&self, graph: &Graph) -> Result<()> {
        let e = &self.expected_stats;
        let checks = [
            ("nodes", e.nodes, graph.num_nodes()),
            ("edges", e.edges, self.count_edges(graph)),
            ("features", e.features, graph.num_features()),
            ("sensitive_groups", e.sensitive_groups, graph.sensitive_count),
        ];
        for (field, expected, found) in checks {
            if expected != found {
                return Err(Error::StatMismatch {
                    dataset: self.name.clone(),
                    field,
                    expected,
                    found,
                });
            }
        }
        if self.edge_convention == EdgeConvention::NativeRows {
            let rows = self.native_edge_rows.ok_or_else(|| {
                Error::Config(format!(
                    "dataset `{}` counts native rows but its manifest lacks native_edge_rows",
                    self.name
                ))
            })?;
            if rows < graph.num_edges() {
                return Err(Error::InvalidGraph(format!(
                    "native_edge_rows {rows} is below the {} deduplicated edges",
                    graph.num_edges()
                )));
            }
        }
        Ok(())
    }
}

/// Loads the dataset in `dir` described by `spec` and validates it against
/// the expected statistics.
pub fn load_dataset(spec: &DatasetSpec, dir: &Path) -> Result<Graph> {
    let graph = load_unchecked(spec, dir)?;
    spec.check_stats(&graph)?;
    Ok(graph)
}

/// Loads the dataset in `dir` using its own `manifest.json`.
pub fn load_dataset_dir(dir: &Path) -> Result<(DatasetSpec, Graph)> {
    let spec = DatasetSpec::read_manifest(&dir.join(MANIFEST_FILE))?;
    let g = load_dataset(&spec, dir)?;
    Ok((spec, g))
}

/// Parses without checking `expected_stats`.
pub fn load_unchecked(spec: &DatasetSpec, dir: &Path) -> Result<Graph> {
    let node_path = dir.join(&spec.node_file);
    let table = read_node_table(&node_path, spec)?;
    let edge_path = dir.join(&spec.edge_file);
    let edges = read_edges(&edge_path, &table.id_index)?;
    let mut features = table.features;
    if spec.standardize {
        standardize_columns(&mut features);
    }
    let graph = Graph::new(features, edges, table.sensitive, table.labels)?;
    Ok(graph)
}

struct NodeTable {
    id_index: HashMap<String, usize>,
    features: Array2<f64>,
    sensitive: Vec<usize>,
    labels: Option<Vec<i64>>,
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn read_node_table(path: &Path, spec: &DatasetSpec) -> Result<NodeTable> {
    let mut rdr = open_csv(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let id_col = find(&spec.id_column)
        .ok_or_else(|| parse_err(path, 1, format!("missing id column `{}`", spec.id_column)))?;
    let sens_col = find(&spec.sensitive_column).ok_or_else(|| {
        parse_err(path, 1, format!("missing sensitive column `{}`", spec.sensitive_column))
    })?;
    let label_col = match &spec.label_column {
        Some(name) => Some(
            find(name).ok_or_else(|| parse_err(path, 1, format!("missing label column `{name}`")))?,
        ),
        None => None,
    };
    let excluded: BTreeSet<usize> = spec
        .exclude_columns
        .iter()
        .filter_map(|c| find(c))
        .chain([id_col, sens_col])
        .chain(label_col)
        .collect();
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|c| !excluded.contains(c)).collect();

    let mut id_index = HashMap::new();
    let mut feats: Vec<f64> = Vec::new();
    let mut sens_raw: Vec<String> = Vec::new();
    let mut labels: Vec<i64> = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let line = row as u64 + 2;
        let rec = rec.map_err(|e| {
            let l = e.position().map_or(line, |p| p.line());
            parse_err(path, l, e.to_string())
        })?;
        if rec.len() != headers.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, found {}", headers.len(), rec.len()),
            ));
        }
        let id = rec[id_col].trim().to_string();
        if id_index.insert(id.clone(), row).is_some() {
            return Err(parse_err(path, line, format!("duplicate node id `{id}`")));
        }
        for &c in &feature_cols {
            let v: f64 = rec[c].trim().parse().map_err(|_| {
                parse_err(path, line, format!("non-numeric value `{}` in column `{}`", &rec[c], &headers[c]))
            })?;
            feats.push(v);
        }
        sens_raw.push(rec[sens_col].trim().to_string());
        if let Some(c) = label_col {
            let raw = rec[c].trim();
            let v: i64 = raw
                .parse::<i64>()
                .or_else(|_| raw.parse::<f64>().map(|f| f as i64))
                .map_err(|_| parse_err(path, line, format!("bad label `{raw}`")))?;
            labels.push(v);
        }
    }
    let n = sens_raw.len();
    let features = Array2::from_shape_vec((n, feature_cols.len()), feats)
        .map_err(|e| parse_err(path, 1, e.to_string()))?;
    let sensitive = encode_categories(&sens_raw);
    Ok(NodeTable {
        id_index,
        features,
        sensitive,
        labels: label_col.map(|_| labels),
    })
}

/// Maps category values to `0..k` in sorted order: numeric order when every
/// value parses as an integer, lexicographic otherwise.
pub fn encode_categories(raw: &[String]) -> Vec<usize> {
    let ints: Option<Vec<i64>> = raw.iter().map(|s| s.parse::<i64>().ok()).collect();
    match ints {
        Some(vals) => {
            let order: BTreeMap<i64, usize> = vals
                .iter()
                .copied()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .enumerate()
                .map(|(i, v)| (v, i))
                .collect();
            vals.iter().map(|v| order[v]).collect()
        }
        None => {
            let order: BTreeMap<&str, usize> = raw
                .iter()
                .map(String::as_str)
                .collect::<BTreeSet<_>>()
                .into_iter()
                .enumerate()
                .map(|(i, v)| (v, i))
                .collect();
            raw.iter().map(|v| order[v.as_str()]).collect()
        }
    }
}

fn read_edges(path: &Path, ids: &HashMap<String, usize>) -> Result<Vec<(usize, usize)>> {
    let mut rdr = open_csv(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    if headers.len() < 2 || &headers[0] != "src" || &headers[1] != "dst" {
        return Err(parse_err(path, 1, "edge file header must be `src,dst`"));
    }
    let mut edges = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let line = row as u64 + 2;
        let rec = rec.map_err(|e| parse_err(path, line, e.to_string()))?;
        let lookup = |k: usize| {
            let key = rec.get(k).unwrap_or("").trim();
            ids.get(key)
                .copied()
                .ok_or_else(|| parse_err(path, line, format!("unknown node id `{key}`")))
        };
        edges.push((lookup(0)?, lookup(1)?));
    }
    Ok(edges)
}

pub fn standardize_columns(x: &mut Array2<f64>) {
    let n = x.nrows() as f64;
    if n == 0.0 {
        return;
    }
    for mut col in x.columns_mut() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        col.mapv_inplace(|v| if sd > 0.0 { (v - mean) / sd } else { 0.0 });
    }
}

/// Writes `graph` in the canonical format (nodes.csv + edges.csv) into `dir`.
/// Node ids are the row indices.
pub fn write_canonical(graph: &Graph, dir: &Path, spec: &DatasetSpec) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let node_path = dir.join(&spec.node_file);
    let file = fs::File::create(&node_path).map_err(|e| Error::io(&node_path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let mut header = vec![spec.id_column.clone()];
    header.extend((0..graph.num_features()).map(|j| format!("f{j}")));
    header.push(spec.sensitive_column.clone());
    if let (Some(lc), Some(_)) = (&spec.label_column, &graph.labels) {
        header.push(lc.clone());
    }
    w.write_record(&header)?;
    for i in 0..graph.num_nodes() {
        let mut row = vec![i.to_string()];
        row.extend(graph.features.row(i).iter().map(|v| v.to_string()));
        row.push(graph.sensitive[i].to_string());
        if let (Some(_), Some(l)) = (&spec.label_column, &graph.labels) {
            row.push(l[i].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(&node_path, e))?;

    let edge_path = dir.join(&spec.edge_file);
    write_edge_file(&edge_path, graph.edges().iter().map(|&(u, v)| (u.to_string(), v.to_string())))?;
    spec.write_manifest(&dir.join(MANIFEST_FILE))
}

pub(crate) fn write_edge_file(
    path: &Path,
    edges: impl Iterator<Item = (String, String)>,
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(["src", "dst"])?;
    for (u, v) in edges {
        w.write_record([u, v])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
