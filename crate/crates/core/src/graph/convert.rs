//! Converters from native dataset layouts into the canonical format.
//!
//! * Social datasets (NBA, Pokec-z, Pokec-n) ship as a node CSV keyed by
//!   `user_id` plus a whitespace-separated relationship file.
//! * Citation datasets in the LINQS layout ship as `<name>.content`
//!   (`id feat... class`) and `<name>.cites` (`cited citing`).
//!
//! The Planetoid pickles used for the 3,327-node Citeseer variant are not
//! readable from Rust; `scripts/planetoid_to_canonical.py` covers them.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::dataset::{write_edge_file, DatasetSpec, EdgeConvention, MANIFEST_FILE};
use crate::error::{Error, Result};

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads a whitespace/comma separated pair list, skipping blank lines.
fn read_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut it = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty());
        match (it.next(), it.next()) {
            (Some(a), Some(b)) => out.push((a.to_string(), b.to_string())),
            (None, _) => continue,
            _ => return Err(parse_err(path, i as u64 + 1, "expected two node ids")),
        }
    }
    Ok(out)
}

/// Canonical `(min, max)` ordering on node ids, numeric when both parse.
fn canonical_pair(a: String, b: String) -> (String, String) {
    let swap = match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(x), Ok(y)) => x > y,
        _ => a > b,
    };
    if swap {
        (b, a)
    } else {
        (a, b)
    }
}

fn dedup_undirected(
    pairs: Vec<(String, String)>,
    known: &HashSet<String>,
) -> (Vec<(String, String)>, usize) {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut dropped = 0;
    for (a, b) in pairs {
        if !known.contains(&a) || !known.contains(&b) {
            dropped += 1;
            continue;
        }
        if a == b {
            continue;
        }
        let p = canonical_pair(a, b);
        if seen.insert(p.clone()) {
            out.push(p);
        }
    }
    (out, dropped)
}

/// Converts a FairGNN-style social dataset.
///
/// `node_csv` must contain `user_id`, the sensitive column and the label
/// column named in `spec`. Labels above 1 are folded into class 1 and
/// negative labels mark unlabeled nodes, following the usual binarization
/// of these datasets.
pub fn convert_social(
    node_csv: &Path,
    relationship_file: &Path,
    spec: &DatasetSpec,
    out_dir: &Path,
) -> Result<DatasetSpec> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let label_col = spec
        .label_column
        .clone()
        .ok_or_else(|| Error::Config("social datasets need a label column".into()))?;

    let file = fs::File::open(node_csv).map_err(|e| Error::io(node_csv, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers()?.clone();
    let id_col = headers
        .iter()
        .position(|h| h == "user_id")
        .ok_or_else(|| parse_err(node_csv, 1, "missing `user_id` column"))?;
    let label_idx = headers
        .iter()
        .position(|h| h == label_col)
        .ok_or_else(|| parse_err(node_csv, 1, format!("missing label column `{label_col}`")))?;

    let out_nodes = out_dir.join(&spec.node_file);
    let out = fs::File::create(&out_nodes).map_err(|e| Error::io(&out_nodes, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(out));
    let renamed: Vec<&str> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| if i == id_col { spec.id_column.as_str() } else { h })
        .collect();
    w.write_record(&renamed)?;
    let mut known = HashSet::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(node_csv, row as u64 + 2, e.to_string()))?;
        let mut fields: Vec<String> = rec.iter().map(str::to_string).collect();
        let raw = fields[label_idx].trim();
        let label = raw
            .parse::<f64>()
            .map_err(|_| parse_err(node_csv, row as u64 + 2, format!("bad label `{raw}`")))?;
        let label = if label > 1.0 { 1 } else { label as i64 };
        fields[label_idx] = label.to_string();
        known.insert(fields[id_col].trim().to_string());
        w.write_record(&fields)?;
    }
    w.flush().map_err(|e| Error::io(&out_nodes, e))?;

    let pairs = read_pairs(relationship_file)?;
    let native_rows = pairs.len();
    let (edges, dropped) = dedup_undirected(pairs, &known);
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} relationship rows with unknown endpoints", spec.name);
    }
    write_edge_file(&out_dir.join(&spec.edge_file), edges.into_iter())?;

    let mut manifest = spec.clone();
    if manifest.edge_convention == EdgeConvention::NativeRows {
        manifest.native_edge_rows = Some(native_rows);
    }
    manifest.write_manifest(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Converts a LINQS citation dataset (`.content` + `.cites`). The paper
/// class becomes the sensitive column `class`; it is excluded from the
/// features by the manifest.
pub fn convert_linqs(
    content: &Path,
    cites: &Path,
    spec: &DatasetSpec,
    out_dir: &Path,
) -> Result<DatasetSpec> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let file = fs::File::open(content).map_err(|e| Error::io(content, e))?;
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut width = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(content, e))?;
        let fields: Vec<String> = line.split_whitespace().map(str::to_string).collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() < 3 {
            return Err(parse_err(content, i as u64 + 1, "row needs id, features and class"));
        }
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(parse_err(
                    content,
                    i as u64 + 1,
                    format!("expected {w} fields, found {}", fields.len()),
                ))
            }
            _ => {}
        }
        rows.push(fields);
    }
    let width = width.unwrap_or(2);
    let d = width - 2;

    let out_nodes = out_dir.join(&spec.node_file);
    let out = fs::File::create(&out_nodes).map_err(|e| Error::io(&out_nodes, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(out));
    let mut header = vec![spec.id_column.clone()];
    header.extend((0..d).map(|j| format!("w{j}")));
    header.push(spec.sensitive_column.clone());
    w.write_record(&header)?;
    let mut known = HashSet::new();
    for r in &rows {
        known.insert(r[0].clone());
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(&out_nodes, e))?;

    let pairs = read_pairs(cites)?;
    let native_rows = pairs.len();
    let (edges, dropped) = dedup_undirected(pairs, &known);
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} citations with unknown endpoints", spec.name);
    }
    write_edge_file(&out_dir.join(&spec.edge_file), edges.into_iter())?;

    let mut manifest = spec.clone();
    if manifest.edge_convention == EdgeConvention::NativeRows {
        manifest.native_edge_rows = Some(native_rows);
    }
    manifest.write_manifest(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::dataset::{load_dataset_dir, ExpectedStats};

    #[test]
    fn social_conversion_counts_native_rows() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = dir.path().join("nba.csv");
        fs::write(
            &nodes,
            "user_id,SALARY,AGE,MP,country\n5,2,20,10,1\n7,0,25,12,0\n9,-1,30,5,1\n",
        )
        .unwrap();
        let rel = dir.path().join("rel.txt");
        // 5 rows: one reversed duplicate, one self loop
        fs::write(&rel, "5\t7\n7\t5\n7\t9\n9 9\n5 9\n").unwrap();
        let mut spec = DatasetSpec::builtin("nba").unwrap();
        spec.expected_stats = ExpectedStats { nodes: 3, edges: 5, features: 2, sensitive_groups: 2 };
        let out = dir.path().join("out");
        let m = convert_social(&nodes, &rel, &spec, &out).unwrap();
        assert_eq!(m.native_edge_rows, Some(5));
        let (_, g) = load_dataset_dir(&out).unwrap();
        assert_eq!(g.num_edges(), 3);
        assert_eq!(g.labels.clone().unwrap(), vec![1, 0, -1]);
        assert_eq!(g.num_features(), 2);
    }

    #[test]
    fn linqs_conversion() {
        let dir = tempfile::tempdir().unwrap();
        let content = dir.path().join("x.content");
        fs::write(&content, "a 0 1 0 Theory\nb 1 0 0 AI\nc 0 0 1 Theory\n").unwrap();
        let cites = dir.path().join("x.cites");
        fs::write(&cites, "a b\nb a\nc a\nzz a\n").unwrap();
        let mut spec = DatasetSpec::builtin("cora").unwrap();
        spec.expected_stats = ExpectedStats { nodes: 3, edges: 4, features: 3, sensitive_groups: 2 };
        let out = dir.path().join("out");
        convert_linqs(&content, &cites, &spec, &out).unwrap();
        let (_, g) = load_dataset_dir(&out).unwrap();
        assert_eq!(g.sensitive, vec![1, 0, 1]);
        assert_eq!(g.edges(), &[(0, 1), (0, 2)]);
    }
}
