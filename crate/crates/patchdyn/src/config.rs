//! JSON run configuration.
//!
//! ```json
//! {
//!   "model": {
//!     "a": [3.0, 4.0],
//!     "competition": [{"kind": "linear", "kappa": 1.0}, {"kind": "linear", "kappa": 1.0}],
//!     "dispersal": [[-1.0, 1.0], [1.0, -1.0]],
//!     "noise": {"kind": "sigma_correlation", "sigma": [2.6457513110645907, 2.6457513110645907],
//!               "correlation": [[1.0, 0.0], [0.0, 1.0]]}
//!   },
//!   "sim": {"dt": 0.001, "t_end": 10000.0, "seed": 1},
//!   "analysis": {"eta": 0.0001}
//! }
//! ```
//!
//! `sim` and `analysis` may be omitted. Unknown keys are rejected and the
//! error names the offending path.

use std::fs;
use std::path::Path;

use patchdyn_core::{ModelSpec, SimConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub model: ModelSpec,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub analysis: AnalysisOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisOptions {
    /// Boundary-layer threshold for occupation fractions.
    pub eta: f64,
    /// Minimum half-width of the inconclusive band around `r = 0`.
    pub band: f64,
    /// Times at which ensemble distances are measured.
    pub checkpoints: Vec<f64>,
    pub replicates: usize,
    /// Initial abundances; all ones when absent.
    pub x0: Option<Vec<f64>>,
    /// Initial proportions; the simplex center when absent.
    pub y0: Option<Vec<f64>>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            eta: 1e-4,
            band: patchdyn_core::analysis::DEFAULT_BAND_FLOOR,
            checkpoints: vec![1.0, 10.0, 100.0],
            replicates: 500,
            x0: None,
            y0: None,
        }
    }
}

impl AnalysisOptions {
    pub fn x0(&self, n: usize) -> Vec<f64> {
        self.x0.clone().unwrap_or_else(|| vec![1.0; n])
    }

    pub fn y0(&self, n: usize) -> Vec<f64> {
        self.y0.clone().unwrap_or_else(|| patchdyn_core::sde::simplex_center(n))
    }
}

impl ConfigDocument {
    pub fn new(model: ModelSpec, sim: SimConfig) -> Self {
        ConfigDocument { model, sim, analysis: AnalysisOptions::default() }
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let doc: ConfigDocument = serde_path_to_error::deserialize(de).map_err(|e| CliError::Config {
            path: origin.to_path_buf(),
            message: format!("at `{}`: {}", e.path(), e.inner()),
        })?;
        doc.sim.validate()?;
        doc.model.check_dimensions()?;
        Ok(doc)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_json(&text, path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "model": {
            "a": [0.5],
            "competition": [{"kind": "linear", "kappa": 1.0}],
            "dispersal": [[0.0]],
            "noise": {"kind": "explicit_gamma", "gamma": [[1.4142135623730951]]}
        }
    }"#;

    #[test]
    fn defaults_fill_missing_blocks() {
        let doc = ConfigDocument::from_json(MINIMAL, Path::new("x.json")).unwrap();
        assert_eq!(doc.sim, SimConfig::default());
        assert_eq!(doc.analysis.eta, 1e-4);
        assert_eq!(doc.analysis.x0(1), vec![1.0]);
    }

    #[test]
    fn unknown_key_names_its_path() {
        let bad = MINIMAL.replace("\"kappa\": 1.0", "\"kappa\": 1.0, \"kapa\": 2.0");
        let err = ConfigDocument::from_json(&bad, Path::new("x.json")).unwrap_err().to_string();
        assert!(err.contains("model.competition[0]"), "{err}");
    }

    #[test]
    fn round_trips() {
        let doc = ConfigDocument::from_json(MINIMAL, Path::new("x.json")).unwrap();
        let again = ConfigDocument::from_json(&doc.to_json(), Path::new("y.json")).unwrap();
        assert_eq!(doc, again);
    }
}
