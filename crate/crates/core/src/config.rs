//! JSON run configuration with `scene`, `solver` and `scenario` sections.
//!
//! Every section and field is optional; missing values take their defaults.
//!
//! ```json
//! { "scene": { "m": 12, "eta": 100.0 }, "solver": { "eps": 1e-3 }, "scenario": { "q_total": 11.0 } }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::SceneConfig;
use crate::pdd::SolverOptions;
use crate::scenarios::SchemeSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scene: SceneConfig,
    pub solver: SolverOptions,
    /// Total power model used by the scheme comparisons.
    pub scenario: SchemeSpec,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.solver.validate()?;
        self.scenario.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::Config(format!("{}: {j}", path.display())),
            other => other,
        })
    }
}
