//! Single-file parameter archives.
//!
//! An archive is one JSON object:
//!
//! ```text
//! {
//!   "format": "graphair-checkpoint/1",
//!   "metadata": { ...free-form JSON... },
//!   "arrays": { "<name>": { "shape": [rows, cols], "data": [row-major f64] } }
//! }
//! ```
//!
//! Floats are written with round-trip precision, so a save/load cycle is
//! bit-exact.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Parameters;

pub const FORMAT: &str = "graphair-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredArray {
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

impl StoredArray {
    pub fn from_array(a: &Array2<f64>) -> Self {
        StoredArray {
            shape: [a.nrows(), a.ncols()],
            data: a.iter().copied().collect(),
        }
    }

    pub fn to_array(&self) -> Result<Array2<f64>> {
        Array2::from_shape_vec((self.shape[0], self.shape[1]), self.data.clone())
            .map_err(|e| Error::Checkpoint(format!("bad array shape {:?}: {e}", self.shape)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub metadata: serde_json::Value,
    pub arrays: BTreeMap<String, StoredArray>,
}

impl Checkpoint {
    pub fn capture(params: &impl Parameters, metadata: serde_json::Value) -> Self {
        let arrays = params
            .named_params()
            .into_iter()
            .map(|(name, a)| (name, StoredArray::from_array(a)))
            .collect();
        Checkpoint {
            format: FORMAT.to_string(),
            metadata,
            arrays,
        }
    }

    /// Copies stored arrays into `params`, which must have the same names
    /// and shapes.
    pub fn restore(&self, params: &mut impl Parameters) -> Result<()> {
        let names: Vec<(String, (usize, usize))> = params
            .named_params()
            .into_iter()
            .map(|(n, a)| (n, a.dim()))
            .collect();
        if names.len() != self.arrays.len() {
            return Err(Error::Checkpoint(format!(
                "archive holds {} arrays, model has {}",
                self.arrays.len(),
                names.len()
            )));
        }
        let mut values = Vec::with_capacity(names.len());
        for (name, dim) in &names {
            let stored = self
                .arrays
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing array {name}")))?;
            let a = stored.to_array()?;
            if a.dim() != *dim {
                return Err(Error::Checkpoint(format!(
                    "array {name}: stored shape {:?}, model shape {dim:?}",
                    a.dim()
                )));
            }
            values.push(a);
        }
        for (slot, v) in params.params_mut().into_iter().zip(values) {
            *slot = v;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec(self)?).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_slice(&bytes)?;
        if ck.format != FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", ck.format)));
        }
        Ok(ck)
    }
}
