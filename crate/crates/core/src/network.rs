//! JSON network description shared by every front end.
//!
//! ```json
//! {"omega_n_hz": 60, "n": 2, "edges": [[0, 1]],
//!  "converter": {"eta": 0.0003142, ...}, "line": {"r_line": 0.2, "l_line": 5e-5}}
//! ```
//!
//! Indices are 0-based and all values are p.u.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{assemble_model, ConverterParams, LineParams, Model, ModelError, Topology, DEFAULT_OMEGA_N};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("cannot read network file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed network JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_n_hz: Option<f64>,
    pub converter: ConverterParams,
    pub line: LineParams,
    pub edges: Vec<(usize, usize)>,
    pub n: usize,
}

impl NetworkSpec {
    pub fn from_json_str(text: &str) -> Result<Self, NetworkError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, NetworkError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| NetworkError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("network spec serialises")
    }

    /// Nominal angular frequency; 50 Hz when the file does not say.
    pub fn omega_n(&self) -> f64 {
        self.omega_n_hz
            .map(|hz| 2.0 * PI * hz)
            .unwrap_or(DEFAULT_OMEGA_N)
    }

    /// Assembles the model, optionally replacing the shunt susceptance.
    pub fn to_model(&self, b_load_override: Option<f64>) -> Result<Model, NetworkError> {
        let mut conv = self.converter;
        if let Some(b) = b_load_override {
            conv.b_load = b;
        }
        let topo = Topology {
            n: self.n,
            edges: self.edges.clone(),
        };
        Ok(assemble_model(conv, self.line, topo, self.omega_n())?)
    }
}
