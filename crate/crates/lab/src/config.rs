//! Run configuration: one JSON document, with command-line overrides.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use wreath_lab::groups::DEFAULT_ELEMENT_BUDGET;
use wreath_lab::Budget;

use crate::RunError;

/// Settings shared by every experiment; `params` is validated by the
/// experiment itself before any computation starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Must name the experiment being run when present.
    pub experiment: Option<String>,
    pub seed: u64,
    pub budget: usize,
    pub out: Option<PathBuf>,
    pub params: serde_json::Value,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            experiment: None,
            seed: 0,
            budget: DEFAULT_ELEMENT_BUDGET,
            out: None,
            params: serde_json::Value::Object(Default::default()),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub budget: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, RunError> {
        serde_json::from_str(text).map_err(|e| RunError::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|source| RunError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| match e {
            RunError::Config(msg) => RunError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn apply(mut self, o: &Overrides) -> Self {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(b) = o.budget {
            self.budget = b;
        }
        if let Some(p) = &o.out {
            self.out = Some(p.clone());
        }
        self
    }

    pub fn budget(&self) -> Budget {
        Budget::new(self.budget)
    }

    /// Typed experiment parameters; unknown keys are rejected.
    pub fn params<P: DeserializeOwned>(&self) -> Result<P, RunError> {
        let value = if self.params.is_null() {
            serde_json::Value::Object(Default::default())
        } else {
            self.params.clone()
        };
        serde_json::from_value(value).map_err(|e| RunError::Config(format!("params: {e}")))
    }

    pub fn validate(&self, experiment: &str) -> Result<(), RunError> {
        if let Some(name) = &self.experiment {
            if name != experiment {
                return Err(RunError::Config(format!(
                    "config is for experiment {name:?} but {experiment:?} was requested"
                )));
            }
        }
        if self.budget == 0 {
            return Err(RunError::Config("budget must be positive".into()));
        }
        Ok(())
    }
}
