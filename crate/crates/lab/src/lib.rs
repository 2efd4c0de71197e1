//! Named, reproducible experiments over the `wreath_lab` library.
//!
//! Each run reads a [`config::RunConfig`], executes one experiment from
//! [`experiments::EXPERIMENTS`], and produces a [`report::Report`] plus CSV
//! side tables. Identical configs give byte-identical reports.

pub mod config;
pub mod experiments;
pub mod mapspec;
pub mod report;

use std::path::PathBuf;

use serde_json::json;
use thiserror::Error;
use wreath_lab::LabError;

use config::RunConfig;
use report::{Report, Status, Table};

/// Exit code for a run whose checks all passed.
pub const EXIT_PASS: i32 = 0;
/// Exit code for a run with at least one failed check.
pub const EXIT_PROPERTY_FAILURE: i32 = 1;
/// Exit code for configuration, budget and I/O errors.
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("unknown experiment {0:?}; `lab list` shows the available ones")]
    UnknownExperiment(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Lab(#[from] LabError),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A finished run, not yet written to disk.
#[derive(Debug, Clone)]
pub struct Run {
    pub report: Report,
    pub tables: Vec<Table>,
}

impl Run {
    pub fn exit_code(&self) -> i32 {
        match self.report.status {
            Status::Pass => EXIT_PASS,
            Status::Fail => EXIT_PROPERTY_FAILURE,
        }
    }
}

pub fn run_experiment(name: &str, config: &RunConfig) -> Result<Run, RunError> {
    let exp = experiments::find(name).ok_or_else(|| RunError::UnknownExperiment(name.to_string()))?;
    config.validate(name)?;
    let (params, outcome) = (exp.run)(config)?;
    // The output directory is left out so reports compare equal across locations.
    let echo = json!({
        "seed": config.seed,
        "budget": config.budget,
        "params": params,
    });
    Ok(Run {
        report: Report::new(name, echo, &outcome),
        tables: outcome.tables,
    })
}

pub fn default_out_dir(experiment: &str) -> PathBuf {
    PathBuf::from("lab-out").join(experiment)
}
