//! Dataset checks and conversion entry points.

use std::path::Path;
use std::time::Instant;

use graphair::graph::convert::{convert_linqs, convert_social};
use graphair::graph::dataset::{load_unchecked, MANIFEST_FILE};
use graphair::graph::DatasetSpec;
use serde::Serialize;

use crate::config::{resolve_dataset, DatasetSource};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DataStatus {
    Ok,
    Missing { reason: String },
    Mismatch { reason: String },
}

/// Loaded statistics of one dataset next to the expected row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataCheck {
    pub name: String,
    #[serde(flatten)]
    pub status: DataStatus,
    pub expected: Option<[usize; 4]>,
    /// `(nodes, edges, features, |S|)` with edges under the dataset's
    /// convention.
    pub found: Option<[usize; 4]>,
    pub seconds: f64,
}

impl DataCheck {
    pub fn is_ok(&self) -> bool {
        self.status == DataStatus::Ok
    }
}

/// Loads `name` from `root` and compares it with its manifest.
pub fn check_dataset(name: &str, root: &Path) -> DataCheck {
    let started = Instant::now();
    let expected = DatasetSpec::builtin(name).map(|s| {
        let e = s.expected_stats;
        [e.nodes, e.edges, e.features, e.sensitive_groups]
    });
    let mut check = DataCheck {
        name: name.to_string(),
        status: DataStatus::Ok,
        expected,
        found: None,
        seconds: 0.0,
    };
    let (dir, spec) = match resolve_dataset(name, root) {
        Ok(DatasetSource::Dir { dir, spec }) => (dir, spec),
        Ok(DatasetSource::Synthetic) => {
            check.status = DataStatus::Mismatch {
                reason: "the synthetic fixture has no published statistics".into(),
            };
            return check;
        }
        Err(e) => {
            check.status = DataStatus::Missing { reason: format!("{e:#}") };
            return check;
        }
    };
    let e = spec.expected_stats;
    check.expected = Some([e.nodes, e.edges, e.features, e.sensitive_groups]);
    if !dir.join(MANIFEST_FILE).exists() {
        log::warn!("{name}: no {MANIFEST_FILE}; using the built-in manifest");
    }
    match load_unchecked(&spec, &dir) {
        Ok(g) => {
            check.found = Some([g.num_nodes(), spec.count_edges(&g), g.num_features(), g.sensitive_count]);
            if let Err(err) = spec.check_stats(&g) {
                check.status = DataStatus::Mismatch { reason: err.to_string() };
            }
        }
        Err(err) => check.status = DataStatus::Mismatch { reason: err.to_string() },
    }
    check.seconds = started.elapsed().as_secs_f64();
    check
}

/// Converts native files into the canonical layout under `out`, using the
/// built-in manifest of `name`.
pub fn convert(name: &str, first: &Path, second: &Path, out: &Path) -> anyhow::Result<DatasetSpec> {
    let spec = DatasetSpec::builtin(name).ok_or_else(|| anyhow::anyhow!("no built-in manifest for {name:?}"))?;
    let spec = match name {
        "nba" | "pokec_z" | "pokec_n" => convert_social(first, second, &spec, out)?,
        "cora" | "citeseer" | "pubmed" => convert_linqs(first, second, &spec, out)?,
        _ => unreachable!("builtin names are covered"),
    };
    Ok(spec)
}
